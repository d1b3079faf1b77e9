#include <swglue/fields.hpp>

#include <catch2/catch_amalgamated.hpp>
#include <random>

using namespace swglue;

namespace {

std::mt19937_64 rng(77001u);

VectorXcd random_coef(int m) {
    std::uniform_real_distribution<Real> u(-1.0, 1.0);
    VectorXcd c(m);
    for (int i = 0; i < m; ++i) c[i] = Complex(u(rng), u(rng));
    return c;
}

GluingParams small_params() {
    GluingParams p;
    p.ell = 26.0;
    p.L0 = 6.0;
    p.delta = 0.05;
    p.kappa = 0.2;
    p.dt = 0.5;
    return p;
}

} // namespace

TEST_CASE("spectral basis bookkeeping") {
    TorusSpec spec;
    spec.N = 2;
    SpatialBasis b(spec);
    REQUIRE(b.modes() == 125);
    REQUIRE(b.index(0, 0, 0) == b.zero_mode());
    REQUIRE(b.index(3, 0, 0) == -1);
    for (int m = 0; m < b.modes(); ++m) {
        const auto& k = b.kvec(m);
        REQUIRE(b.index(k[0], k[1], k[2]) == m);
        REQUIRE(b.neg(b.neg(m)) == m);
    }
}

TEST_CASE("convolution multiplies single modes with the 1/sqrt(V) factor") {
    TorusSpec spec;
    spec.N = 2;
    spec.sides = {2.0, 1.0, 1.5};
    SpatialBasis b(spec);
    const Real invsv = 1.0 / std::sqrt(spec.volume());

    VectorXcd f = VectorXcd::Zero(b.modes()), g = VectorXcd::Zero(b.modes());
    f[b.index(1, 0, -1)] = Complex(2.0, 1.0);
    g[b.index(0, 1, 1)] = Complex(0.0, -3.0);
    VectorXcd h = b.conv(f, g);
    for (int m = 0; m < b.modes(); ++m) {
        if (m == b.index(1, 1, 0))
            REQUIRE(std::abs(h[m] - Complex(2.0, 1.0) * Complex(0.0, -3.0) * invsv) < 1e-14);
        else
            REQUIRE(std::abs(h[m]) == 0.0);
    }

    SECTION("product with the constant function sqrt(V) E_0 is the identity") {
        VectorXcd one = VectorXcd::Zero(b.modes());
        one[b.zero_mode()] = std::sqrt(spec.volume());
        VectorXcd r = random_coef(b.modes());
        REQUIRE((b.conv(one, r) - r).norm() < 1e-13);
    }
    SECTION("modes leaving the band are truncated") {
        VectorXcd a = VectorXcd::Zero(b.modes());
        a[b.index(2, 0, 0)] = 1.0;
        REQUIRE(b.conv(a, a).norm() == 0.0); // only target would be k1 = 4
    }
    SECTION("commutative and bilinear") {
        VectorXcd x = random_coef(b.modes()), y = random_coef(b.modes());
        REQUIRE((b.conv(x, y) - b.conv(y, x)).norm() < 1e-12);
    }
}

TEST_CASE("spectral derivative is exact on modes") {
    TorusSpec spec;
    spec.N = 1;
    spec.sides = {2.0, 1.0, 1.0};
    SpatialBasis b(spec);
    VectorXcd f = VectorXcd::Zero(b.modes());
    f[b.index(1, -1, 0)] = 1.0;
    for (int j = 0; j < 3; ++j) {
        const Real expect = 2.0 * M_PI * std::abs(j == 0 ? 1.0 : (j == 1 ? -1.0 : 0.0)) /
                            spec.sides[j];
        REQUIRE(b.deriv(f, j).norm() == Catch::Approx(expect).margin(1e-14));
    }
    // differentiation commutes with pointwise conjugation
    VectorXcd r = random_coef(b.modes());
    REQUIRE((b.deriv(b.conj_field(r), 0) - b.conj_field(b.deriv(r, 0))).norm() < 1e-13);
}

TEST_CASE("real-dof packing is an isometric bijection") {
    TorusSpec spec;
    spec.N = 2;
    SpatialBasis b(spec);

    SECTION("real scalars") {
        VectorXcd c = random_coef(b.modes());
        // symmetrize to a real-valued field
        VectorXcd sym = 0.5 * (c + b.conj_field(c));
        VectorXd d = b.pack_real(sym);
        REQUIRE(d.size() == b.modes());
        REQUIRE(d.norm() == Catch::Approx(sym.norm()).epsilon(1e-12));
        REQUIRE((b.unpack_real(d) - sym).norm() < 1e-12);
    }
    SECTION("complex scalars") {
        VectorXcd c = random_coef(b.modes());
        VectorXd d = b.pack_complex(c);
        REQUIRE(d.size() == 2 * b.modes());
        REQUIRE(d.norm() == Catch::Approx(c.norm()).epsilon(1e-13));
        REQUIRE((b.unpack_complex(d) - c).norm() == 0.0);
    }
    SECTION("imaginary-valued fields through Field3") {
        Field3 f(b, FieldKind::OneForm3);
        f.coef = random_coef(b.modes() * 3).reshaped(b.modes(), 3);
        f.enforce_symmetry();
        // an ImagV field satisfies conj(f) = -f pointwise
        for (int c = 0; c < 3; ++c)
            REQUIRE((b.conj_field(f.coef.col(c)) + f.coef.col(c)).norm() < 1e-12);
        VectorXd d = f.pack();
        REQUIRE(d.size() == f.dof());
        REQUIRE(d.norm() == Catch::Approx(f.norm()).epsilon(1e-12));
        Field3 g = Field3::unpack(b, f.kind, f.vt, d);
        REQUIRE((g.coef - f.coef).norm() < 1e-12);
    }
    SECTION("spinor field roundtrip") {
        Field3 f(b, FieldKind::Spinor);
        f.coef = random_coef(b.modes() * 2).reshaped(b.modes(), 2);
        Field3 g = Field3::unpack(b, f.kind, f.vt, f.pack());
        REQUIRE((g.coef - f.coef).norm() == 0.0);
    }
}

TEST_CASE("parameter validation") {
    GluingParams p = small_params();
    REQUIRE_NOTHROW(p.validate());
    SECTION("neck too short") {
        p.ell = 4.0 * p.L0;
        REQUIRE_THROWS_AS(p.validate(), InvalidParams);
    }
    SECTION("weight too large") {
        p.delta = 0.5 * p.kappa;
        REQUIRE_THROWS_AS(p.validate(), InvalidParams);
    }
    SECTION("global grid covers the chart symmetrically") {
        TimeGrid g = p.global_grid();
        REQUIRE(g.t(0) == Catch::Approx(-(p.ell + p.collar)));
        REQUIRE(g.t_end() == Catch::Approx(p.ell + p.collar));
        REQUIRE(g.dt <= p.dt + 1e-12);
    }
}

TEST_CASE("time coordinates") {
    GluingParams p = small_params();
    TimeCoords tc = make_time_coords(p);
    const Real l = p.ell;

    SECTION("tau_o equals |t| outside the smoothing window") {
        REQUIRE(tau_o_profile(5.0) == 5.0);
        REQUIRE(tau_o_profile(-5.0) == 5.0);
        REQUIRE(tau_o_profile(0.0) == Catch::Approx(0.5));
        REQUIRE(tau_o_profile(1.0) == 1.0);
    }
    SECTION("tau_plus is the end coordinate with collar value -1") {
        REQUIRE(tc.tau_plus(0.0) == Catch::Approx(l));
        REQUIRE(tc.tau_plus(-l) == 0.0);
        REQUIRE(tc.tau_plus(-l - 2.0) == -1.0);
        REQUIRE(tc.tau_plus(-l - 5.0) == -1.0);
        REQUIRE(tc.tau_minus(3.0) == Catch::Approx(tc.tau_plus(-3.0)));
    }
    SECTION("tau_ell matches the pieces away from the middle and folds in C_l") {
        for (Real t : {-l, -10.0, -1.0})
            REQUIRE(tc.tau_ell(t) == Catch::Approx(tc.tau_plus(t)));
        for (Real t : {1.0, 10.0, l})
            REQUIRE(tc.tau_ell(t) == Catch::Approx(tc.tau_minus(t)));
        for (Real t : {-0.9, 0.0, 0.5, 0.9})
            REQUIRE(tc.tau_ell(t) == Catch::Approx(l - tc.tau_o(t)));
    }
    SECTION("profiles are continuous across the seams") {
        for (Real t0 : {-1.0, 1.0, -l, -l - 2.0}) {
            const Real h = 1e-7;
            REQUIRE(std::abs(tc.tau_ell(t0 + h) - tc.tau_ell(t0 - h)) < 1e-5);
        }
    }
}

TEST_CASE("smooth profiles") {
    REQUIRE(smoothstep(0.0) == 0.0);
    REQUIRE(smoothstep(1.0) == 1.0);
    REQUIRE(smoothstep(0.5) == Catch::Approx(0.5));
    // quartic tangency at both endpoints (so S', S'', S''' vanish there)
    const Real h = 1e-3;
    REQUIRE(smoothstep(h) < 40 * h * h * h * h);
    REQUIRE(1.0 - smoothstep(1.0 - h) < 40 * h * h * h * h);
    REQUIRE(smoothstep(0.25) + smoothstep(0.75) == Catch::Approx(1.0).margin(1e-14));

    // antiderivative consistency
    for (Real x : {0.1, 0.3, 0.7, 0.95})
        REQUIRE(smoothstep_int(x) ==
                Catch::Approx(simpson(smoothstep, 0.0, x, 512)).margin(1e-12));

    // ramp01: monotone with slope bounded by 1.25
    Real prev = 0, max_slope = 0;
    for (int i = 1; i <= 2000; ++i) {
        const Real x = i / 2000.0;
        const Real v = ramp01(x);
        REQUIRE(v >= prev - 1e-15);
        max_slope = std::max(max_slope, (v - prev) * 2000.0);
        prev = v;
    }
    REQUIRE(ramp01(1.0) == 1.0);
    REQUIRE(max_slope <= 1.25 + 1e-9);
}

TEST_CASE("cutoff family") {
    GluingParams p = small_params();
    TimeCoords tc = make_time_coords(p);
    CutoffSet cs = make_cutoffs(p, tc.grid, tc);
    const Real L0 = p.L0;

    SECTION("squares sum to one everywhere") {
        for (int i = 0; i < tc.grid.n; ++i) {
            const Real s = cs.mu_plus_s[i] * cs.mu_plus_s[i] +
                           cs.mu_o_s[i] * cs.mu_o_s[i] +
                           cs.mu_minus_s[i] * cs.mu_minus_s[i];
            REQUIRE(std::abs(s - 1.0) < 1e-12);
        }
    }
    SECTION("supports and plateaus") {
        REQUIRE(cs.mu_plus(-2 * L0 - 1.0) == 1.0);
        REQUIRE(cs.mu_plus(-L0 + 0.1) == 0.0);
        REQUIRE(cs.mu_o(0.0) == 1.0);
        REQUIRE(cs.mu_o(2 * L0 + 0.1) == 0.0);
        REQUIRE(cs.mu_minus(2 * L0 + 1.0) == 1.0);
        REQUIRE(cs.lambda(-2 * L0) == 1.0);
        REQUIRE(cs.lambda(2 * L0) == Catch::Approx(0.0).margin(1e-14));
        REQUIRE(cs.lambda(0.0) == Catch::Approx(0.5));
    }
    SECTION("derivative bound scales as 1/L0") {
        const Real bound = cs.mu_deriv_bound();
        REQUIRE(bound == Catch::Approx(0.5 * M_PI * 1.25 / L0));
        const Real h = 1e-5;
        for (const auto& mu : {cs.mu_plus, cs.mu_o, cs.mu_minus}) {
            Real worst = 0;
            for (Real t = -2 * L0; t <= 2 * L0; t += 0.01)
                worst = std::max(worst, std::abs(mu(t + h) - mu(t - h)) / (2 * h));
            REQUIRE(worst <= bound + 1e-6);
        }
    }
    SECTION("nu splits into a partition of unity on the pieces") {
        REQUIRE(cs.nu > 0);
        for (Real t : {-10.0, 0.0, 7.0})
            REQUIRE(cs.nu_plus(t) + cs.nu_minus(t) == Catch::Approx(1.0).margin(1e-12));
        REQUIRE(cs.nu_minus(-2 * L0) == 0.0);
        REQUIRE(cs.nu_minus(2 * L0) == Catch::Approx(1.0).margin(1e-9));
        // symmetric cutoffs and weight: the split is even at t = 0
        REQUIRE(cs.nu_minus(0.0) == Catch::Approx(0.5).margin(1e-9));
    }
    SECTION("bump integrates to 2 and c normalizes the grid weight to 2") {
        REQUIRE(simpson(cs.beta, -1.0, 1.0, 2048) == Catch::Approx(2.0).margin(1e-10));
        Real gi = 0;
        for (int i = 0; i < tc.grid.n; ++i)
            gi += tc.grid.qw(i) * std::exp(-p.delta * tc.tau_o(tc.grid.t(i)));
        REQUIRE(cs.c * cs.c * gi == Catch::Approx(2.0).margin(1e-12));
    }
    SECTION("coarse grids are rejected") {
        GluingParams q = small_params();
        TimeGrid g = tc.grid;
        g.dt = q.L0; // far too coarse
        g.n = 10;
        REQUIRE_THROWS_AS(make_cutoffs(q, g, tc), InvalidParams);
    }
}

TEST_CASE("time differentiation is exact on low-degree polynomials") {
    TorusSpec spec;
    SpatialBasis b(spec);
    TimeGrid g{-2.0, 0.25, 17};
    CylField f(b, Chart::Cylinder, FieldKind::Function, g);
    for (int i = 0; i < g.n; ++i) {
        const Real t = g.t(i);
        f.nodes[i].coef(b.zero_mode(), 0) = Complex(0, t * t * t - 2 * t);
    }
    CylField df = time_deriv(f);
    for (int i = 0; i < g.n; ++i) {
        const Real t = g.t(i);
        REQUIRE(std::abs(df.nodes[i].coef(b.zero_mode(), 0) - Complex(0, 3 * t * t - 2)) <
                1e-10);
    }
}

TEST_CASE("weighted norms") {
    TorusSpec spec;
    spec.sides = {2.0, 1.0, 1.0};
    SpatialBasis b(spec);
    GluingParams p = small_params();
    TimeCoords tc = make_time_coords(p);
    TimeGrid g = tc.grid;

    SECTION("constant spinor at delta = 0 measures the time span") {
        CylField f(b, Chart::Glued, FieldKind::SpinorPlus, g);
        for (auto& nd : f.nodes) nd.coef(b.zero_mode(), 0) = 1.0;
        const Real span = g.t_end() - g.t(0);
        // the constant has no derivatives, so k = 0, 1, 2 all agree
        for (int k = 0; k <= 2; ++k)
            REQUIRE(weighted_norm(f, k, 0.0, tc.tau_ell) ==
                    Catch::Approx(std::sqrt(span)).epsilon(1e-12));
    }
    SECTION("single spatial mode picks up the symbol in the k = 1 norm") {
        CylField f(b, Chart::Cylinder, FieldKind::SpinorPlus, g);
        for (auto& nd : f.nodes) nd.coef(b.index(1, 0, 0), 1) = 1.0;
        const Real n0 = weighted_norm(f, 0, p.delta, tc.tau_o);
        const Real n1 = weighted_norm(f, 1, p.delta, tc.tau_o);
        const Real sym = 2.0 * M_PI / spec.sides[0];
        REQUIRE(n1 == Catch::Approx(n0 * std::sqrt(1.0 + sym * sym)).epsilon(1e-10));
    }
    SECTION("weight decays the far field") {
        CylField f(b, Chart::Cylinder, FieldKind::Function, g);
        const int far = g.n - 1, mid = g.n / 2;
        f.nodes[far].coef(b.zero_mode(), 0) = Complex(0, 1);
        const Real nfar = weighted_norm(f, 0, p.delta, tc.tau_o);
        CylField h(b, Chart::Cylinder, FieldKind::Function, g);
        h.nodes[mid].coef(b.zero_mode(), 0) = Complex(0, 1);
        const Real nmid = weighted_norm(h, 0, p.delta, tc.tau_o);
        // identical unweighted mass, exponentially smaller at the far end
        REQUIRE(nfar < nmid);
        const Real expect =
            std::exp(-0.5 * p.delta * (tc.tau_o(g.t(far)) - tc.tau_o(g.t(mid))));
        REQUIRE(nfar / nmid == Catch::Approx(std::sqrt(0.5) * expect).epsilon(1e-10));
    }
}

TEST_CASE("chart transfer and time surgery") {
    TorusSpec spec;
    SpatialBasis b(spec);
    GluingParams p = small_params();
    TimeGrid g = p.global_grid();
    CylField f(b, Chart::Glued, FieldKind::Function, g);
    for (int i = 0; i < g.n; ++i)
        f.nodes[i].coef(b.zero_mode(), 0) = Complex(0, std::sin(0.1 * i));

    SECTION("restrict then extend recovers the field on the window") {
        CylField r = restrict_time(f, -5.0, 5.0);
        REQUIRE(r.grid.t(0) >= -5.0 - 1e-9);
        REQUIRE(r.grid.t_end() <= 5.0 + 1e-9);
        CylField e = extend_zero(r, g);
        for (int i = 0; i < g.n; ++i) {
            const Real t = g.t(i);
            const Complex v = e.nodes[i].coef(b.zero_mode(), 0);
            if (t >= r.grid.t(0) - 1e-9 && t <= r.grid.t_end() + 1e-9)
                REQUIRE(v == f.nodes[i].coef(b.zero_mode(), 0));
            else
                REQUIRE(std::abs(v) == 0.0);
        }
    }
    SECTION("transfer to the plus piece relabels time by +ell") {
        CylField tp = transfer(f, Chart::PlusPiece, p);
        REQUIRE(tp.chart == Chart::PlusPiece);
        REQUIRE(tp.grid.t(0) == Catch::Approx(g.t(0) + p.ell));
        REQUIRE((tp.nodes[3].coef - f.nodes[3].coef).norm() == 0.0);
        CylField back = transfer(tp, Chart::Glued, p);
        REQUIRE(back.grid.t(0) == Catch::Approx(g.t(0)));
    }
    SECTION("norms are invariant under relabeling") {
        REQUIRE(transfer(f, Chart::PlusPiece, p).norm() == Catch::Approx(f.norm()));
    }
}
