#include <swglue/swmap.hpp>

#include <catch2/catch_amalgamated.hpp>
#include <random>

using namespace swglue;

namespace {

std::mt19937_64 rng(424242u);

VectorXcd rvec(int m, Real amp = 1.0) {
    std::uniform_real_distribution<Real> u(-amp, amp);
    VectorXcd c(m);
    for (int i = 0; i < m; ++i) c[i] = Complex(u(rng), u(rng));
    return c;
}

const TorusSpec& unit_spec() {
    static TorusSpec s;
    return s;
}

const SpatialBasis& basis1() {
    static SpatialBasis b(unit_spec());
    return b;
}

TimeGrid short_grid() { return TimeGrid{-2.0, 0.25, 17}; }

Configuration3 random_eta(const SpatialBasis& b, Real amp = 0.5) {
    Configuration3 eta(b);
    eta.B.coef = rvec(b.modes() * 3, amp).reshaped(b.modes(), 3);
    eta.B.enforce_symmetry();
    eta.Phi.coef = rvec(b.modes() * 2, amp).reshaped(b.modes(), 2);
    return eta;
}

TangentY random_tangent(const SpatialBasis& b, Real amp = 0.5) {
    TangentY t(b, FieldKind::OneForm3);
    t.a.coef = rvec(b.modes() * 3, amp).reshaped(b.modes(), 3);
    t.a.enforce_symmetry();
    t.phi.coef = rvec(b.modes() * 2, amp).reshaped(b.modes(), 2);
    return t;
}

Configuration random_config(const SpatialBasis& b, const TimeGrid& g, Real amp = 0.3) {
    Configuration xi(b, Chart::Cylinder, g);
    for (int n = 0; n < g.n; ++n) {
        xi.A.nodes[n].coef = rvec(b.modes() * 4, amp).reshaped(b.modes(), 4);
        xi.A.nodes[n].enforce_symmetry();
        xi.Psi.nodes[n].coef = rvec(b.modes() * 2, amp).reshaped(b.modes(), 2);
    }
    return xi;
}

Tangent4 random_tangent4(const SpatialBasis& b, const TimeGrid& g, Real amp = 0.3) {
    Tangent4 t(b, Chart::Cylinder, g);
    for (int n = 0; n < g.n; ++n) {
        t.a.nodes[n].coef = rvec(b.modes() * 4, amp).reshaped(b.modes(), 4);
        t.a.nodes[n].enforce_symmetry();
        t.phi.nodes[n].coef = rvec(b.modes() * 2, amp).reshaped(b.modes(), 2);
    }
    return t;
}

/// Constant-spinor critical point (B = 0, Phi = (c, 0)) of sw3 with the
/// matching perturbation.
std::pair<Configuration3, Field3> model_critical(const SpatialBasis& b, Real c) {
    Configuration3 eta(b);
    eta.Phi.coef(b.zero_mode(), 0) = c * std::sqrt(b.spec().volume());
    return {eta, matching_perturbation(b, eta.Phi.coef)};
}

} // namespace

TEST_CASE("sw3 basics") {
    const SpatialBasis& b = basis1();
    SECTION("zero configuration maps to zero") {
        Configuration3 eta(b);
        REQUIRE(sw3(eta).norm() == 0.0);
    }
    SECTION("reducible flat point detects the perturbation") {
        Configuration3 eta(b);
        Field3 h3(b, FieldKind::TwoForm3, ValueType::RealV);
        h3.coef = rvec(b.modes() * 3).reshaped(b.modes(), 3);
        h3.enforce_symmetry();
        SWOutput3 r = sw3(eta, &h3);
        REQUIRE((r.curv.coef + Complex(0, 1) * h3.coef).norm() == 0.0);
        REQUIRE(r.dirac.norm() == 0.0);
    }
    SECTION("the constant-spinor model point is exactly critical") {
        auto [eta, h3] = model_critical(b, 0.8);
        REQUIRE(sw3(eta, &h3).norm() < 1e-12);
    }
}

TEST_CASE("flat Dirac operator on Y") {
    const SpatialBasis& b = basis1();
    SECTION("kills constants") {
        MatrixXcd psi = MatrixXcd::Zero(b.modes(), 2);
        psi(b.zero_mode(), 0) = 1.0;
        psi(b.zero_mode(), 1) = Complex(0.3, -0.2);
        REQUIRE(dirac3(b, nullptr, psi).norm() == 0.0);
    }
    SECTION("eigen-relation on a single mode") {
        TorusSpec spec;
        spec.sides = {2.0, 1.0, 1.0};
        SpatialBasis bs(spec);
        MatrixXcd psi = MatrixXcd::Zero(bs.modes(), 2);
        const int m = bs.index(1, 0, -1);
        psi(m, 0) = Complex(0.7, 0.1);
        psi(m, 1) = Complex(-0.4, 0.9);
        const Real kt = 2.0 * M_PI * std::sqrt(0.25 + 1.0); // |(k1/s1, k2, k3)|
        REQUIRE(dirac3(bs, nullptr, psi).norm() ==
                Catch::Approx(kt * psi.norm()).epsilon(1e-12));
    }
}

TEST_CASE("sw4 basics") {
    const SpatialBasis& b = basis1();
    const TimeGrid g = short_grid();
    SECTION("zero configuration maps to zero") {
        Configuration xi(b, Chart::Cylinder, g);
        REQUIRE(sw4(xi).norm() == 0.0);
    }
    SECTION("constant imaginary A_t acts as a zeroth-order Dirac term") {
        Configuration xi(b, Chart::Cylinder, g);
        const Complex a0 = Complex(0, 0.7) * std::sqrt(b.spec().volume());
        // spatially constant spinor: the spatial Dirac term drops out exactly
        MatrixXcd psi = MatrixXcd::Zero(b.modes(), 2);
        psi(b.zero_mode(), 0) = Complex(0.4, -0.9);
        psi(b.zero_mode(), 1) = Complex(-1.1, 0.2);
        for (int n = 0; n < g.n; ++n) {
            xi.A.nodes[n].coef(b.zero_mode(), 0) = a0;
            xi.Psi.nodes[n].coef = psi;
        }
        SWOutput r = sw4(xi);
        // d_t Psi = 0, so the Dirac residual is (A_t/2) Psi pointwise
        for (int n = 0; n < g.n; ++n)
            REQUIRE((r.dirac.nodes[n].coef - Complex(0, 0.35) * psi).norm() < 1e-12);
        // curvature residual only sees -q(Psi)
        REQUIRE((r.curv.nodes[0].coef + q_sd(b, psi)).norm() < 1e-13);
    }
    SECTION("static pullback of the model critical point solves sw4") {
        auto [eta, h3] = model_critical(b, 0.8);
        Configuration xi = pullback_static(eta, Chart::Cylinder, g);
        CylField h = pullback_perturbation(h3, Chart::Cylinder, g);
        REQUIRE(sw4(xi, &h).norm() < 1e-12);
    }
}

TEST_CASE("gauge action") {
    const SpatialBasis& b = basis1();
    const TimeGrid g = short_grid();
    Configuration xi = random_config(b, g);

    SECTION("identity") {
        GaugeTransform id{CylField(b, Chart::Cylinder, FieldKind::Function, g)};
        Configuration out = gauge_act(xi, id);
        REQUIRE((out - xi).norm() < 1e-13);
    }
    SECTION("constant gauge leaves A fixed and rotates Psi") {
        GaugeTransform gt{CylField(b, Chart::Cylinder, FieldKind::Function, g)};
        const Real theta = 0.6;
        for (int n = 0; n < g.n; ++n)
            gt.u.nodes[n].coef(b.zero_mode(), 0) =
                Complex(0, theta) * std::sqrt(b.spec().volume());
        Configuration out = gauge_act(xi, gt);
        REQUIRE((out.A - xi.A).norm() < 1e-12);
        const Complex phase = std::exp(Complex(0, -theta));
        for (int n = 0; n < g.n; ++n)
            REQUIRE((out.Psi.nodes[n].coef - phase * xi.Psi.nodes[n].coef).norm() < 1e-12);
    }
    SECTION("equivariance of the residual norm for time-dependent gauges") {
        GaugeTransform gt{CylField(b, Chart::Cylinder, FieldKind::Function, g)};
        // time-static spinor so the stencil only sees the smooth gauge factor,
        // and a small amplitude keeps the stencil error on exp(u(t)) far below
        // the 1e-10 equivariance tolerance
        for (int n = 1; n < g.n; ++n) xi.Psi.nodes[n].coef = xi.Psi.nodes[0].coef;
        for (int n = 0; n < g.n; ++n) {
            const Real t = g.t(n);
            gt.u.nodes[n].coef(b.zero_mode(), 0) =
                Complex(0, 1e-3 * (t + 0.1 * t * t)) * std::sqrt(b.spec().volume());
        }
        const Real r0 = sw4(xi).norm();
        const Real r1 = sw4(gauge_act(xi, gt)).norm();
        REQUIRE(r1 == Catch::Approx(r0).epsilon(1e-10));
    }
    SECTION("group law in the logarithm") {
        // spatially constant gauges: the convolution algebra is exact there
        GaugeTransform g1{CylField(b, Chart::Cylinder, FieldKind::Function, g)};
        GaugeTransform g2 = g1, g12 = g1;
        std::uniform_real_distribution<Real> u(-1.0, 1.0);
        const Real sv = std::sqrt(b.spec().volume());
        for (int n = 0; n < g.n; ++n) {
            const Complex u1(0, u(rng)), u2(0, u(rng));
            g1.u.nodes[n].coef(b.zero_mode(), 0) = sv * u1;
            g2.u.nodes[n].coef(b.zero_mode(), 0) = sv * u2;
            g12.u.nodes[n].coef(b.zero_mode(), 0) = sv * (u1 + u2);
        }
        Configuration two_steps = gauge_act(gauge_act(xi, g1), g2);
        Configuration one_step = gauge_act(xi, g12);
        REQUIRE((two_steps - one_step).norm() < 1e-10 * std::max(1.0, xi.norm()));
    }
    SECTION("band truncation bounds the defect for varying gauges") {
        // spatially varying gauges compose only up to the dropped-mode order
        GaugeTransform g1{CylField(b, Chart::Cylinder, FieldKind::Function, g)};
        GaugeTransform g2 = g1, g12 = g1;
        const Real amp = 1e-3;
        for (int n = 0; n < g.n; ++n) {
            Field3 f1(b, FieldKind::Function), f2(b, FieldKind::Function);
            f1.coef.col(0) = rvec(b.modes(), amp);
            f2.coef.col(0) = rvec(b.modes(), amp);
            f1.enforce_symmetry();
            f2.enforce_symmetry();
            g1.u.nodes[n].coef = f1.coef;
            g2.u.nodes[n].coef = f2.coef;
            g12.u.nodes[n].coef = f1.coef + f2.coef;
        }
        Configuration two_steps = gauge_act(gauge_act(xi, g1), g2);
        Configuration one_step = gauge_act(xi, g12);
        REQUIRE((two_steps - one_step).norm() < 100 * amp * amp);
    }
}

TEST_CASE("deformation operators") {
    const SpatialBasis& b = basis1();
    const TimeGrid g = short_grid();

    SECTION("D0 detects irreducibility through the constant gauge direction") {
        auto [eta, h3] = model_critical(b, 0.8);
        (void)h3;
        Field3 f(b, FieldKind::Function);
        f.coef(b.zero_mode(), 0) = Complex(0, 1) * std::sqrt(b.spec().volume());
        TangentY t = D0_Y(eta, f);
        REQUIRE(t.a.norm() == 0.0);      // df = 0
        REQUIRE(t.phi.norm() > 1e-3);    // -f Phi nonzero
    }
    SECTION("D0 matches the gauge-orbit derivative") {
        Configuration xi = random_config(b, g);
        CylField f(b, Chart::Cylinder, FieldKind::Function, g);
        for (int n = 0; n < g.n; ++n) {
            Field3 fn(b, FieldKind::Function);
            fn.coef.col(0) = rvec(b.modes(), 0.5);
            fn.enforce_symmetry();
            f.nodes[n].coef = fn.coef;
        }
        const Real t = 1e-4;
        GaugeTransform gp{f}, gm{f};
        gp.u *= t;
        gm.u *= -t;
        Configuration fd = gauge_act(xi, gp) - gauge_act(xi, gm);
        fd *= 1.0 / (2 * t);
        Tangent4 d0 = D0_4(xi, f);
        Real err = std::hypot((fd.A - d0.a).norm(), (fd.Psi - d0.phi).norm());
        REQUIRE(err < 1e-6);
    }
    SECTION("quadratic expansion of sw4 is exact") {
        Configuration xi = random_config(b, g);
        Tangent4 t = random_tangent4(b, g);
        Configuration xit = xi;
        xit.A += t.a;
        xit.Psi += t.phi;
        SWOutput lhs = sw4(xit) - sw4(xi);
        Tangent4 lin = D1_4(xi, t);
        Tangent4 rem = quadratic_remainder(t);
        const Real err = std::hypot((lhs.curv - lin.a - rem.a).norm(),
                                    (lhs.dirac - lin.phi - rem.phi).norm());
        REQUIRE(err < 1e-11 * std::max(1.0, lhs.norm()));
    }
    SECTION("D1 matches centered differences of sw4") {
        Configuration xi = random_config(b, g);
        Tangent4 t = random_tangent4(b, g);
        const Real s = 1e-4;
        Configuration xp = xi, xm = xi;
        xp.A += s * t.a;  xp.Psi += s * t.phi;
        xm.A -= s * t.a;  xm.Psi -= s * t.phi;
        SWOutput fd = sw4(xp) - sw4(xm);
        Tangent4 lin = D1_4(xi, t);
        const Real err = std::hypot(((1.0 / (2 * s)) * fd.curv - lin.a).norm(),
                                    ((1.0 / (2 * s)) * fd.dirac - lin.phi).norm());
        REQUIRE(err < 1e-6);
    }
    SECTION("D1 D0 vanishes at a static solution") {
        auto [eta, h3] = model_critical(b, 0.8);
        (void)h3;
        Configuration xi = pullback_static(eta, Chart::Cylinder, g);
        CylField f(b, Chart::Cylinder, FieldKind::Function, g);
        for (int n = 0; n < g.n; ++n) {
            Field3 fn(b, FieldKind::Function);
            fn.coef.col(0) = rvec(b.modes(), 1.0);
            fn.enforce_symmetry();
            f.nodes[n].coef = fn.coef;
        }
        Tangent4 dd = D1_4(xi, D0_4(xi, f));
        REQUIRE(dd.norm() < 1e-8 * std::max(1.0, f.norm()));
    }
    SECTION("D1_Y D0_Y vanishes at the model critical point") {
        auto [eta, h3] = model_critical(b, 0.8);
        (void)h3;
        Field3 f(b, FieldKind::Function);
        f.coef.col(0) = rvec(b.modes());
        f.enforce_symmetry();
        TangentY dd = D1_Y(eta, D0_Y(eta, f));
        REQUIRE(dd.norm() < 1e-12 * std::max(1.0, f.norm()));
    }
}

TEST_CASE("CSD functional and flow field") {
    const SpatialBasis& b = basis1();

    SECTION("vanishes at the background") {
        Configuration3 eta(b);
        REQUIRE(csd(eta) == 0.0);
    }
    SECTION("Dirac term scales quadratically in the spinor") {
        Configuration3 eta(b);
        eta.Phi.coef = rvec(b.modes() * 2).reshaped(b.modes(), 2);
        const Real c1 = csd(eta);
        eta.Phi *= 3.0;
        REQUIRE(csd(eta) == Catch::Approx(9.0 * c1).epsilon(1e-12));
    }
    SECTION("flow field is minus the CSD gradient in the doubled-spinor metric") {
        Configuration3 eta = random_eta(b, 0.4);
        Field3 h3(b, FieldKind::TwoForm3, ValueType::RealV);
        h3.coef = rvec(b.modes() * 3, 0.3).reshaped(b.modes(), 3);
        h3.enforce_symmetry();
        for (int trial = 0; trial < 5; ++trial) {
            TangentY v = random_tangent(b, 1.0);
            const Real t = 1e-5;
            Configuration3 ep = eta, em = eta;
            ep.B += t * v.a;   ep.Phi += t * v.phi;
            em.B -= t * v.a;   em.Phi -= t * v.phi;
            const Real fd = (csd(ep, &h3) - csd(em, &h3)) / (2 * t);
            TangentY V = flow_field(eta, &h3);
            const Real pairing = V.a.pack().dot(v.a.pack()) +
                                 2.0 * V.phi.pack().dot(v.phi.pack());
            REQUIRE(fd == Catch::Approx(-pairing).margin(1e-6));
        }
    }
    SECTION("flow field vanishes exactly at the model critical point") {
        auto [eta, h3] = model_critical(b, 0.8);
        REQUIRE(flow_field(eta, &h3).norm() < 1e-12);
    }
}

TEST_CASE("energy of paths") {
    const SpatialBasis& b = basis1();
    std::vector<Configuration3> path;
    for (int i = 0; i < 9; ++i) path.push_back(random_eta(b, 0.3));

    SECTION("constant path has zero energy") {
        std::vector<Configuration3> c(9, path[0]);
        REQUIRE(energy(c, 0.1) < 1e-18);
    }
    SECTION("reversal preserves energy") {
        std::vector<Configuration3> rev(path.rbegin(), path.rend());
        REQUIRE(energy(rev, 0.1) == Catch::Approx(energy(path, 0.1)).epsilon(1e-12));
    }
    SECTION("energy is nonnegative") { REQUIRE(energy(path, 0.1) >= 0.0); }
}

TEST_CASE("CSD Hessian and spectral gap") {
    const SpatialBasis& b = basis1();

    SECTION("flat spectrum on the unit torus") {
        Configuration3 flat(b);
        Real asym = 0;
        VectorXd eig = hessian_spectrum(flat, &asym);
        REQUIRE(asym < 1e-12);
        // every nonzero eigenvalue is 2 pi |k| for a lattice vector k
        std::vector<Real> allowed;
        for (int a = 0; a <= 3; ++a)
            allowed.push_back(2.0 * M_PI * std::sqrt(static_cast<Real>(a)));
        for (int i = 0; i < eig.size(); ++i) {
            const Real v = std::abs(eig[i]);
            Real best = 1e9;
            for (Real w : allowed) best = std::min(best, std::abs(v - w));
            REQUIRE(best < 1e-8);
        }
        // both 2 pi (curl / Dirac) and 2 pi sqrt(2) occur
        REQUIRE((eig.array().abs() - 2 * M_PI).abs().minCoeff() < 1e-8);
        REQUIRE((eig.array().abs() - 2 * std::sqrt(2.0) * M_PI).abs().minCoeff() < 1e-8);
    }
    SECTION("upper-triangular structure at a reducible point") {
        Configuration3 flat(b);
        flat.B.coef = rvec(b.modes() * 3, 0.5).reshaped(b.modes(), 3);
        flat.B.enforce_symmetry();
        MatrixXd H = hessian_csd(flat);
        TangentY probe(b, FieldKind::OneForm3);
        // form-only input produces no spinor output when Phi = 0
        VectorXd e = VectorXd::Zero(probe.dof());
        e.head(probe.a.dof()) = VectorXd::Random(probe.a.dof());
        VectorXd out = H * e;
        REQUIRE(out.tail(probe.phi.dof()).norm() == 0.0);
    }
    SECTION("kappa at the flat point") {
        Configuration3 flat(b);
        KappaResult k = kappa_bound(flat);
        REQUIRE(k.gap == Catch::Approx(2 * M_PI).epsilon(1e-10));
        REQUIRE(k.kappa == Catch::Approx(0.45 * 2 * M_PI).epsilon(1e-10));
        REQUIRE(k.gauge_dim == b.modes() - 1);
        REQUIRE(k.h1_dim == 7); // H^1(T^3) + flat Dirac kernel
    }
}

TEST_CASE("formal dimension") {
    REQUIRE(formal_dimension(0, 0, 0) == FormalDim{0, 1});
    REQUIRE(formal_dimension(0, 2, 0) == FormalDim{-1, 1});
    REQUIRE(formal_dimension(4, 4, 0) == FormalDim{-1, 1});
    REQUIRE_FALSE(formal_dimension(1, 0, 0).integral());
}
