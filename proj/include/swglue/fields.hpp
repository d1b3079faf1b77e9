#pragma once

// Discrete fields on the model geometries: band-limited spectral fields on the
// flat 3-torus Y, time-gridded fields on cylinders and on the glued manifold,
// time coordinates, cutoff functions, and weighted Sobolev norms.
//
// All 4-dimensional charts share one global time coordinate
// t in [-(l + Tc), l + Tc]; the plus piece, minus piece, cylinder and glued
// manifold differ only through their time-coordinate functions
//   tau_+ = t + l   (collar value -1 below t = -l),
//   tau_- = l - t   (mirror),
//   tau_o = |t|     (smoothed inside C_1),
//   tau_l = l - tau_o on C_1, tau_+/- outside,
// and through the exponential weights built from them.

#include "basis.hpp"
#include "clifford.hpp"

#include <memory>
#include <utility>

namespace swglue {

// ---------------------------------------------------------------------------
// Field kinds
// ---------------------------------------------------------------------------

enum class FieldKind {
    Function,   // i R-valued function (3d or one time slice)
    OneForm3,   // i R-valued 1-form on Y
    TwoForm3,   // 2-form on Y (imaginary for curvature, real for perturbations)
    Spinor,     // C^2-valued spinor on Y
    OneForm4,   // i R-valued 1-form on a 4d chart: components {dt, e1, e2, e3}
    SelfDual2,  // self-dual 2-form, components on the orthonormal basis
    SpinorPlus, // section of S+
    SpinorMinus // section of S-
};

enum class ValueType { RealV, ImagV, CplxV };

inline int ncomp_of(FieldKind k) {
    switch (k) {
        case FieldKind::Function: return 1;
        case FieldKind::OneForm3: return 3;
        case FieldKind::TwoForm3: return 3;
        case FieldKind::Spinor: return 2;
        case FieldKind::OneForm4: return 4;
        case FieldKind::SelfDual2: return 3;
        case FieldKind::SpinorPlus: return 2;
        case FieldKind::SpinorMinus: return 2;
    }
    return 0;
}

inline ValueType default_vt(FieldKind k) {
    switch (k) {
        case FieldKind::Spinor:
        case FieldKind::SpinorPlus:
        case FieldKind::SpinorMinus: return ValueType::CplxV;
        default: return ValueType::ImagV;
    }
}

// ---------------------------------------------------------------------------
// Field3: one spatial field (or one time slice of a 4d field)
// ---------------------------------------------------------------------------

struct Field3 {
    const SpatialBasis* basis = nullptr;
    FieldKind kind = FieldKind::Function;
    ValueType vt = ValueType::ImagV;
    MatrixXcd coef; // modes x ncomp

    Field3() = default;
    Field3(const SpatialBasis& b, FieldKind k)
        : basis(&b), kind(k), vt(default_vt(k)),
          coef(MatrixXcd::Zero(b.modes(), ncomp_of(k))) {}
    Field3(const SpatialBasis& b, FieldKind k, ValueType v)
        : basis(&b), kind(k), vt(v),
          coef(MatrixXcd::Zero(b.modes(), ncomp_of(k))) {}

    int ncomp() const { return static_cast<int>(coef.cols()); }

    /// Real degrees of freedom of this field.
    int dof() const {
        const int per = (vt == ValueType::CplxV) ? 2 * basis->modes() : basis->modes();
        return per * ncomp();
    }

    /// Project coefficients onto the symmetry class of the value type.
    void enforce_symmetry() {
        if (vt == ValueType::CplxV) return;
        for (int c = 0; c < ncomp(); ++c) {
            VectorXcd col = coef.col(c);
            VectorXcd conj = basis->conj_field(col);
            if (vt == ValueType::RealV)
                coef.col(c) = 0.5 * (col + conj);
            else
                coef.col(c) = 0.5 * (col - conj);
        }
    }

    VectorXd pack() const {
        VectorXd out(dof());
        int p = 0;
        for (int c = 0; c < ncomp(); ++c) {
            if (vt == ValueType::CplxV) {
                out.segment(p, 2 * basis->modes()) = basis->pack_complex(coef.col(c));
                p += 2 * basis->modes();
            } else if (vt == ValueType::RealV) {
                out.segment(p, basis->modes()) = basis->pack_real(coef.col(c));
                p += basis->modes();
            } else { // ImagV: f = i g with g real
                out.segment(p, basis->modes()) =
                    basis->pack_real(Complex(0, -1) * coef.col(c));
                p += basis->modes();
            }
        }
        return out;
    }

    static Field3 unpack(const SpatialBasis& b, FieldKind k, ValueType v, const VectorXd& d) {
        Field3 f(b, k, v);
        int p = 0;
        for (int c = 0; c < f.ncomp(); ++c) {
            if (v == ValueType::CplxV) {
                f.coef.col(c) = b.unpack_complex(d.segment(p, 2 * b.modes()));
                p += 2 * b.modes();
            } else if (v == ValueType::RealV) {
                f.coef.col(c) = b.unpack_real(d.segment(p, b.modes()));
                p += b.modes();
            } else {
                f.coef.col(c) = Complex(0, 1) * b.unpack_real(d.segment(p, b.modes()));
                p += b.modes();
            }
        }
        return f;
    }

    /// L^2(Y) norm (coefficients are on an orthonormal basis).
    Real norm() const { return coef.norm(); }

    Field3& operator+=(const Field3& o) { coef += o.coef; return *this; }
    Field3& operator-=(const Field3& o) { coef -= o.coef; return *this; }
    Field3& operator*=(Real s) { coef *= s; return *this; }
    friend Field3 operator+(Field3 a, const Field3& b) { a += b; return a; }
    friend Field3 operator-(Field3 a, const Field3& b) { a -= b; return a; }
    friend Field3 operator*(Real s, Field3 a) { a *= s; return a; }
};

// ---------------------------------------------------------------------------
// Time grid and 4d fields
// ---------------------------------------------------------------------------

enum class Chart { PlusPiece, MinusPiece, Cylinder, Glued };

inline const char* chart_name(Chart c) {
    switch (c) {
        case Chart::PlusPiece: return "plus";
        case Chart::MinusPiece: return "minus";
        case Chart::Cylinder: return "cylinder";
        case Chart::Glued: return "glued";
    }
    return "?";
}

struct TimeGrid {
    Real t0 = 0.0;
    Real dt = 0.1;
    int n = 0;        // node count
    int fd_order = 4; // time-stencil order (2 keeps chart operators narrowly banded)

    Real t(int i) const { return t0 + i * dt; }
    Real t_end() const { return t(n - 1); }
    bool same(const TimeGrid& o) const {
        return n == o.n && std::abs(t0 - o.t0) < 1e-12 && std::abs(dt - o.dt) < 1e-12;
    }
    /// Trapezoid quadrature weight of node i.
    Real qw(int i) const { return (i == 0 || i == n - 1) ? 0.5 * dt : dt; }
};

/// Field on a 4d chart: one spatial field per time node.
struct CylField {
    Chart chart = Chart::Glued;
    FieldKind kind = FieldKind::SpinorPlus;
    ValueType vt = ValueType::CplxV;
    TimeGrid grid;
    std::vector<Field3> nodes;

    CylField() = default;
    CylField(const SpatialBasis& b, Chart ch, FieldKind k, const TimeGrid& g)
        : chart(ch), kind(k), vt(default_vt(k)), grid(g) {
        nodes.assign(g.n, Field3(b, k));
    }
    CylField(const SpatialBasis& b, Chart ch, FieldKind k, ValueType v, const TimeGrid& g)
        : chart(ch), kind(k), vt(v), grid(g) {
        nodes.assign(g.n, Field3(b, k, v));
    }

    const SpatialBasis& basis() const { return *nodes.at(0).basis; }
    int dof() const { return grid.n == 0 ? 0 : grid.n * nodes[0].dof(); }

    VectorXd pack() const {
        VectorXd out(dof());
        const int nd = nodes[0].dof();
        for (int i = 0; i < grid.n; ++i) out.segment(i * nd, nd) = nodes[i].pack();
        return out;
    }
    static CylField unpack(const SpatialBasis& b, Chart ch, FieldKind k, ValueType v,
                           const TimeGrid& g, const VectorXd& d) {
        CylField f(b, ch, k, v, g);
        const int nd = f.nodes[0].dof();
        for (int i = 0; i < g.n; ++i)
            f.nodes[i] = Field3::unpack(b, k, v, d.segment(i * nd, nd));
        return f;
    }

    CylField& operator+=(const CylField& o) {
        for (int i = 0; i < grid.n; ++i) nodes[i] += o.nodes[i];
        return *this;
    }
    CylField& operator-=(const CylField& o) {
        for (int i = 0; i < grid.n; ++i) nodes[i] -= o.nodes[i];
        return *this;
    }
    CylField& operator*=(Real s) {
        for (auto& nd : nodes) nd *= s;
        return *this;
    }
    friend CylField operator+(CylField a, const CylField& b) { a += b; return a; }
    friend CylField operator-(CylField a, const CylField& b) { a -= b; return a; }
    friend CylField operator*(Real s, CylField a) { a *= s; return a; }

    /// Unweighted L^2 norm over the chart (trapezoid in time).
    Real norm() const {
        Real s = 0;
        for (int i = 0; i < grid.n; ++i) {
            const Real v = nodes[i].norm();
            s += grid.qw(i) * v * v;
        }
        return std::sqrt(s);
    }
};

// ---------------------------------------------------------------------------
// Gluing parameters
// ---------------------------------------------------------------------------

struct GluingParams {
    Real ell = 26.0;
    Real L0 = 6.0;
    Real delta = 0.05;
    Real kappa = 0.2;
    int N = 1;
    Real dt = 0.5;
    Real collar = 2.0;
    int fd_order = 2;

    void validate() const {
        if (!(ell > 4.0 * L0))
            throw InvalidParams("GluingParams: need ell > 4 L0 (got ell=" +
                                std::to_string(ell) + ", L0=" + std::to_string(L0) + ")");
        if (!(delta > 0.0 && delta < 0.5 * kappa))
            throw InvalidParams("GluingParams: need 0 < delta < kappa/2");
        if (N < 1) throw InvalidParams("GluingParams: N >= 1");
        if (!(dt > 0)) throw InvalidParams("GluingParams: dt > 0");
    }

    /// Global time grid covering [-(ell+collar), ell+collar] symmetrically;
    /// the step is shrunk slightly so the endpoints land on nodes.
    TimeGrid global_grid() const {
        const Real span = 2.0 * (ell + collar);
        const int steps = static_cast<int>(std::ceil(span / dt - 1e-9));
        TimeGrid g;
        g.n = steps + 1;
        g.dt = span / steps;
        g.t0 = -(ell + collar);
        g.fd_order = fd_order;
        return g;
    }
};

// ---------------------------------------------------------------------------
// Smooth profiles
// ---------------------------------------------------------------------------

/// C^3 smoothstep: 35x^4 - 84x^5 + 70x^6 - 20x^7 on [0,1], clamped outside.
inline Real smoothstep(Real x) {
    if (x <= 0) return 0;
    if (x >= 1) return 1;
    const Real x4 = x * x * x * x;
    return x4 * (35 - 84 * x + 70 * x * x - 20 * x * x * x);
}

/// Antiderivative of smoothstep with F(0) = 0 (so F(1) = 1/2).
inline Real smoothstep_int(Real x) {
    if (x <= 0) return 0;
    if (x >= 1) return 0.5 + (x - 1);
    const Real x5 = x * x * x * x * x;
    return x5 * (7 - 14 * x + 10 * x * x - 2.5 * x * x * x);
}

/// Monotone C^3 ramp 0 -> 1 on [0,1] whose derivative is a smoothed trapezoid
/// with ramp fraction w = 0.2; max slope = 1/(1-w) = 1.25.
inline Real ramp01(Real x) {
    constexpr Real w = 0.2;
    constexpr Real p = 1.0 / (1.0 - w); // plateau rate
    if (x <= 0) return 0;
    if (x >= 1) return 1;
    auto up = [&](Real u) { // integral of the rate profile from 0 to u
        if (u <= w) return p * w * smoothstep_int(u / w);
        if (u <= 1 - w) return p * (w * 0.5 + (u - w));
        return p * (w * 0.5 + (1 - 2 * w) + w * (0.5 - smoothstep_int((1 - u) / w)));
    };
    return up(x);
}

// ---------------------------------------------------------------------------
// Time coordinates
// ---------------------------------------------------------------------------

struct TimeCoord {
    Chart chart = Chart::Glued;
    Real ell = 0;
    Real collar = 2.0;
    std::function<Real(Real)> tau; // profile as a function of global t
    VectorXd samples;              // profile sampled on the grid

    Real operator()(Real t) const { return tau(t); }
};

struct TimeCoords {
    TimeCoord tau_plus, tau_minus, tau_o, tau_ell;
    TimeGrid grid;
};

/// tau_o = |t| outside C_1, smoothed near 0 (value alpha = 1/2 at t = 0).
inline Real tau_o_profile(Real t) {
    const Real u = std::abs(t);
    if (u >= 1.0) return u;
    const Real S = smoothstep(u);
    return u * S + 0.5 * (1.0 - S);
}

/// End coordinate of the plus piece as a function of global t: equals t + l on
/// the end, interpolates to -1 across the collar [-l-2, -l].
inline Real tau_plus_profile(Real t, Real ell) {
    const Real u = t + ell;
    if (u >= 0) return u;
    if (u <= -2) return -1.0;
    const Real b = smoothstep(1.0 + u / 2.0);
    return b * u + (b - 1.0);
}

inline Real tau_ell_profile(Real t, Real ell) {
    if (t <= -1.0) return tau_plus_profile(t, ell);
    if (t >= 1.0) return tau_plus_profile(-t, ell);
    return ell - tau_o_profile(t);
}

/// Build the four time coordinates on the global grid.  Rejects l <= 4 L0.
inline TimeCoords make_time_coords(const GluingParams& params) {
    params.validate();
    TimeCoords tc;
    tc.grid = params.global_grid();
    const Real l = params.ell;
    auto build = [&](Chart ch, std::function<Real(Real)> f) {
        TimeCoord c;
        c.chart = ch;
        c.ell = l;
        c.collar = params.collar;
        c.tau = std::move(f);
        c.samples.resize(tc.grid.n);
        for (int i = 0; i < tc.grid.n; ++i) c.samples[i] = c.tau(tc.grid.t(i));
        return c;
    };
    tc.tau_plus = build(Chart::PlusPiece, [l](Real t) { return tau_plus_profile(t, l); });
    tc.tau_minus = build(Chart::MinusPiece, [l](Real t) { return tau_plus_profile(-t, l); });
    tc.tau_o = build(Chart::Cylinder, [](Real t) { return tau_o_profile(t); });
    tc.tau_ell = build(Chart::Glued, [l](Real t) { return tau_ell_profile(t, l); });
    return tc;
}

inline const TimeCoord& coord_for(const TimeCoords& tc, Chart ch) {
    switch (ch) {
        case Chart::PlusPiece: return tc.tau_plus;
        case Chart::MinusPiece: return tc.tau_minus;
        case Chart::Cylinder: return tc.tau_o;
        case Chart::Glued: return tc.tau_ell;
    }
    return tc.tau_ell;
}

// ---------------------------------------------------------------------------
// Cutoff functions
// ---------------------------------------------------------------------------

/// The cutoff family of the splicing construction.  mu+^2 + mu_o^2 + mu-^2 = 1
/// holds identically (angle construction); profiles are closed-form C^3.
struct CutoffSet {
    Real L0 = 0, delta = 0, c = 0, nu = 0;
    TimeGrid grid;
    std::function<Real(Real)> lambda, mu_plus, mu_o, mu_minus, nu_plus, nu_minus, beta;
    VectorXd lambda_s, mu_plus_s, mu_o_s, mu_minus_s, nu_plus_s, nu_minus_s, beta_s;

    /// Documented bound on |mu'| for this profile family (max d(ramp01)/dx =
    /// 1.25, times pi/2 over width L0).
    Real mu_deriv_bound() const { return 0.5 * M_PI * 1.25 / L0; }
};

/// Build all cutoffs; c and nu are computed by quadrature on the grid (c by
/// the grid's own trapezoid rule so downstream projections are idempotent on
/// the grid, nu by fine Simpson on the closed-form integrand).
inline CutoffSet make_cutoffs(const GluingParams& params, const TimeGrid& grid,
                              const TimeCoords& tc) {
    params.validate();
    const Real L0 = params.L0, delta = params.delta;
    if (grid.dt > L0 / 8.0 + 1e-12)
        throw InvalidParams("make_cutoffs: grid under-resolves L0 (need dt <= L0/8)");
    CutoffSet cs;
    cs.L0 = L0;
    cs.delta = delta;
    cs.grid = grid;

    auto theta = [L0](Real x) { return 0.5 * M_PI * ramp01(x); };
    cs.mu_plus = [L0, theta](Real t) {
        if (t <= -2 * L0) return 1.0;
        if (t >= -L0) return 0.0;
        return std::cos(theta((t + 2 * L0) / L0));
    };
    cs.mu_minus = [cs](Real t) { return cs.mu_plus(-t); };
    cs.mu_o = [L0, theta](Real t) {
        const Real u = std::abs(t);
        if (u >= 2 * L0) return 0.0;
        if (u <= L0) return 1.0;
        return std::sin(theta((2 * L0 - u) / L0));
    };
    cs.lambda = [L0](Real t) { return 1.0 - ramp01((t + 2 * L0) / (4 * L0)); };

    auto tau_o = tc.tau_o.tau;
    // nu and the nu_+/- integrals use the closed-form integrand.
    auto integrand = [delta, tau_o, mu_o = cs.mu_o](Real s) {
        return std::exp(-delta * tau_o(s)) * mu_o(s);
    };
    cs.nu = simpson(integrand, -2 * L0, 2 * L0, 4096);
    cs.nu_minus = [integrand, L0, nu = cs.nu](Real t) {
        if (t <= -2 * L0) return 0.0;
        const Real hi = std::min(t, 2 * L0);
        return simpson(integrand, -2 * L0, hi, 1024) / nu;
    };
    cs.nu_plus = [nm = cs.nu_minus](Real t) { return 1.0 - nm(t); };

    // beta: C^3 bump in C_1 with integral 2.
    auto bump = [](Real t) { return ramp01(2.0 * (t + 1.0)) * ramp01(2.0 * (1.0 - t)); };
    const Real bint = simpson(bump, -1.0, 1.0, 1024);
    cs.beta = [bump, bint](Real t) {
        return (t <= -1 || t >= 1) ? 0.0 : 2.0 * bump(t) / bint;
    };

    // c: normalized against the grid trapezoid rule of exp(-delta tau_o).
    Real gi = 0;
    for (int i = 0; i < grid.n; ++i) gi += grid.qw(i) * std::exp(-delta * tau_o(grid.t(i)));
    cs.c = std::sqrt(2.0 / gi);

    auto sample = [&](const std::function<Real(Real)>& f) {
        VectorXd v(grid.n);
        for (int i = 0; i < grid.n; ++i) v[i] = f(grid.t(i));
        return v;
    };
    cs.lambda_s = sample(cs.lambda);
    cs.mu_plus_s = sample(cs.mu_plus);
    cs.mu_o_s = sample(cs.mu_o);
    cs.mu_minus_s = sample(cs.mu_minus);
    cs.nu_minus_s = sample(cs.nu_minus);
    cs.nu_plus_s = VectorXd::Ones(grid.n) - cs.nu_minus_s;
    cs.beta_s = sample(cs.beta);
    return cs;
}

// ---------------------------------------------------------------------------
// Time differentiation (4th-order central, one-sided at boundaries)
// ---------------------------------------------------------------------------

/// Stencil row (offsets relative to node i) for d/dt at node i of an n-node grid.
inline std::vector<std::pair<int, Real>> fd_stencil(int i, int n, Real dt, int order = 4) {
    auto scale = [dt](std::initializer_list<std::pair<int, Real>> l) {
        std::vector<std::pair<int, Real>> v;
        for (auto [o, c] : l) v.emplace_back(o, c / dt);
        return v;
    };
    if (order == 2 || n < 5) { // 2nd order (also the fallback on very short grids)
        if (i == 0) return scale({{0, -1.5}, {1, 2.0}, {2, -0.5}});
        if (i == n - 1) return scale({{-2, 0.5}, {-1, -2.0}, {0, 1.5}});
        return scale({{-1, -0.5}, {1, 0.5}});
    }
    if (i == 0)
        return scale({{0, -25.0 / 12}, {1, 4.0}, {2, -3.0}, {3, 4.0 / 3}, {4, -0.25}});
    if (i == 1)
        return scale({{-1, -0.25}, {0, -5.0 / 6}, {1, 1.5}, {2, -0.5}, {3, 1.0 / 12}});
    if (i == n - 2)
        return scale({{-3, -1.0 / 12}, {-2, 0.5}, {-1, -1.5}, {0, 5.0 / 6}, {1, 0.25}});
    if (i == n - 1)
        return scale({{-4, 0.25}, {-3, -4.0 / 3}, {-2, 3.0}, {-1, -4.0}, {0, 25.0 / 12}});
    return scale({{-2, 1.0 / 12}, {-1, -2.0 / 3}, {1, 2.0 / 3}, {2, -1.0 / 12}});
}

/// d/dt of a 4d field.
inline CylField time_deriv(const CylField& f) {
    CylField out = f;
    for (int i = 0; i < f.grid.n; ++i) {
        MatrixXcd acc = MatrixXcd::Zero(f.nodes[0].coef.rows(), f.nodes[0].coef.cols());
        for (auto [o, c] : fd_stencil(i, f.grid.n, f.grid.dt, f.grid.fd_order))
            acc += c * f.nodes[i + o].coef;
        out.nodes[i].coef = acc;
    }
    return out;
}

/// Spatial derivative d/dx_j applied componentwise.
inline CylField space_deriv(const CylField& f, int j) {
    CylField out = f;
    for (int i = 0; i < f.grid.n; ++i)
        for (int c = 0; c < f.nodes[i].ncomp(); ++c)
            out.nodes[i].coef.col(c) = f.basis().deriv(f.nodes[i].coef.col(c), j);
    return out;
}

// ---------------------------------------------------------------------------
// Weighted Sobolev norms
// ---------------------------------------------------------------------------

/// L^2_{k,-delta} norm: (sum_{j<=k} int e^{-delta tau} |grad^j f|^2)^{1/2}.
/// Pass a negative delta for the +delta-weighted cylinder norm.
inline Real weighted_norm(const CylField& f, int k, Real delta, const TimeCoord& tau) {
    if (k < 0 || k > 2) throw InvalidParams("weighted_norm: k must be 0, 1, or 2");
    std::vector<CylField> store;
    store.reserve(1 + 4 + 16);
    store.push_back(f);
    Real total = 0;
    auto accumulate = [&](const CylField& g) {
        for (int i = 0; i < g.grid.n; ++i) {
            const Real w = std::exp(-delta * tau(g.grid.t(i)));
            const Real v = g.nodes[i].norm();
            total += g.grid.qw(i) * w * v * v;
        }
    };
    accumulate(store[0]);
    std::size_t lo = 0, hi = 1;
    for (int j = 1; j <= k; ++j) {
        const std::size_t nlo = hi;
        for (std::size_t s = lo; s < hi; ++s) {
            CylField base = store[s]; // copy: store may reallocate
            store.push_back(time_deriv(base));
            for (int d = 0; d < 3; ++d) store.push_back(space_deriv(base, d));
        }
        lo = nlo;
        hi = store.size();
        for (std::size_t s = lo; s < hi; ++s) accumulate(store[s]);
    }
    return std::sqrt(total);
}

// ---------------------------------------------------------------------------
// Chart transfer
// ---------------------------------------------------------------------------

/// Shift the grid origin by dt0 (relabels t -> t + dt0, values unchanged).
inline CylField time_shift(CylField f, Real dt0) {
    f.grid.t0 += dt0;
    return f;
}

/// Restrict to the nodes with t in [lo, hi] (inclusive, half-step tolerance).
inline CylField restrict_time(const CylField& f, Real lo, Real hi) {
    int i0 = -1, i1 = -2;
    for (int i = 0; i < f.grid.n; ++i) {
        const Real t = f.grid.t(i);
        if (t >= lo - 1e-9 && i0 < 0) i0 = i;
        if (t <= hi + 1e-9) i1 = i;
    }
    if (i0 < 0 || i1 < i0) throw InvalidParams("restrict_time: empty overlap");
    CylField out = f;
    out.grid.t0 = f.grid.t(i0);
    out.grid.n = i1 - i0 + 1;
    out.nodes.assign(f.nodes.begin() + i0, f.nodes.begin() + i1 + 1);
    return out;
}

/// Extend by zero onto a larger grid with the same step and aligned nodes.
inline CylField extend_zero(const CylField& f, const TimeGrid& g) {
    if (std::abs(f.grid.dt - g.dt) > 1e-12)
        throw InvalidParams("extend_zero: step mismatch");
    const Real off = (f.grid.t0 - g.t0) / g.dt;
    const int i0 = static_cast<int>(std::lround(off));
    if (std::abs(off - i0) > 1e-6 || i0 < 0 || i0 + f.grid.n > g.n)
        throw InvalidParams("extend_zero: grids not aligned");
    CylField out = f;
    out.grid = g;
    out.nodes.assign(g.n, Field3(f.basis(), f.kind, f.vt));
    for (int i = 0; i < f.grid.n; ++i) out.nodes[i0 + i] = f.nodes[i];
    return out;
}

/// Transfer between charts: piece-local time coordinates are shifted copies of
/// the global one (tau_+ = t + l, tau_- = l - t at aligned nodes), so transfer
/// is an exact relabeling plus restriction to the overlap.
inline CylField transfer(const CylField& f, Chart to, const GluingParams& params) {
    CylField out = f;
    const Real l = params.ell;
    auto local_origin = [&](Chart ch) -> Real {
        // Grid origin offset of a chart's preferred labeling vs global t.
        switch (ch) {
            case Chart::PlusPiece: return l; // tau_+ = t + l
            default: return 0.0;             // minus piece stays on global labels
        }
    };
    const Real shift = local_origin(to) - local_origin(f.chart);
    out = time_shift(out, shift);
    out.chart = to;
    return out;
}

} // namespace swglue
