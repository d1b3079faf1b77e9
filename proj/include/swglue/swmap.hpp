#pragma once

// The Seiberg-Witten maps and their linearizations on the discrete model:
// the 4-dimensional map sw4 and its 3-dimensional static analog sw3, the
// Dirac operators, the gauge action, the deformation operators D0 / D1 in
// both dimensions, the Chern-Simons-Dirac functional with its gradient flow
// field, energy, the CSD Hessian, and the formal dimension formula.
//
// Sign calibration (fixed by a finite-difference gradient test): with the
// conventions of clifford.hpp, the temporal-gauge flow field
//   (Bdot, Phidot) = (-*(F_B - q(Phi) - i h3), -dirac_B Phi)
// is the negative gradient of
//   csd = -1/2 Int b^db + Int b^(i h3) + Int <Phi, dirac_B Phi>
// with respect to the real metric (id on forms) + (2 Re<,> on spinors).
// Energy therefore integrates |Bdot|^2 + 2 |Phidot|^2; only the CSD/energy
// identity and the Hessian symmetrization see the doubled spinor metric, all
// other norms stay plain hermitian.

#include "fields.hpp"

#include <numeric>

namespace swglue {

// ---------------------------------------------------------------------------
// Configurations
// ---------------------------------------------------------------------------

/// Static configuration on Y: imaginary 1-form B and spinor Phi.
struct Configuration3 {
    Field3 B;
    Field3 Phi;

    Configuration3() = default;
    explicit Configuration3(const SpatialBasis& b)
        : B(b, FieldKind::OneForm3), Phi(b, FieldKind::Spinor) {}

    const SpatialBasis& basis() const { return *B.basis; }
    Real norm() const { return std::hypot(B.norm(), Phi.norm()); }

    Configuration3& operator+=(const Configuration3& o) { B += o.B; Phi += o.Phi; return *this; }
    Configuration3& operator-=(const Configuration3& o) { B -= o.B; Phi -= o.Phi; return *this; }
    Configuration3& operator*=(Real s) { B *= s; Phi *= s; return *this; }
    friend Configuration3 operator+(Configuration3 a, const Configuration3& b) { a += b; return a; }
    friend Configuration3 operator-(Configuration3 a, const Configuration3& b) { a -= b; return a; }
    friend Configuration3 operator*(Real s, Configuration3 a) { a *= s; return a; }
};

/// Configuration on a 4-dimensional chart: imaginary 1-form A (components
/// {dt, e1, e2, e3}) and plus-spinor Psi.
struct Configuration {
    CylField A;
    CylField Psi;

    Configuration() = default;
    Configuration(const SpatialBasis& b, Chart ch, const TimeGrid& g)
        : A(b, ch, FieldKind::OneForm4, g), Psi(b, ch, FieldKind::SpinorPlus, g) {}

    const SpatialBasis& basis() const { return A.basis(); }
    Chart chart() const { return A.chart; }
    const TimeGrid& grid() const { return A.grid; }
    Real norm() const { return std::hypot(A.norm(), Psi.norm()); }

    Configuration& operator+=(const Configuration& o) { A += o.A; Psi += o.Psi; return *this; }
    Configuration& operator-=(const Configuration& o) { A -= o.A; Psi -= o.Psi; return *this; }
    Configuration& operator*=(Real s) { A *= s; Psi *= s; return *this; }
    friend Configuration operator+(Configuration a, const Configuration& b) { a += b; return a; }
    friend Configuration operator-(Configuration a, const Configuration& b) { a -= b; return a; }
    friend Configuration operator*(Real s, Configuration a) { a *= s; return a; }
};

/// Output of sw4: self-dual curvature residual (basis {omega_j}, imaginary
/// components) and the minus-spinor Dirac residual.
struct SWOutput {
    CylField curv;
    CylField dirac;

    SWOutput() = default;
    SWOutput(const SpatialBasis& b, Chart ch, const TimeGrid& g)
        : curv(b, ch, FieldKind::SelfDual2, g), dirac(b, ch, FieldKind::SpinorMinus, g) {}

    Real norm() const { return std::hypot(curv.norm(), dirac.norm()); }
    SWOutput& operator-=(const SWOutput& o) { curv -= o.curv; dirac -= o.dirac; return *this; }
    friend SWOutput operator-(SWOutput a, const SWOutput& b) { a -= b; return a; }
};

/// Output of sw3: 2-form curvature residual and spinor Dirac residual.
struct SWOutput3 {
    Field3 curv;
    Field3 dirac;

    SWOutput3() = default;
    explicit SWOutput3(const SpatialBasis& b)
        : curv(b, FieldKind::TwoForm3), dirac(b, FieldKind::Spinor, ValueType::CplxV) {}

    Real norm() const { return std::hypot(curv.norm(), dirac.norm()); }
};

/// Gauge transformation g = exp(u) with u an imaginary-valued function field;
/// stored through its logarithm so the group law is coefficient addition.
struct GaugeTransform {
    CylField u;        // FieldKind::Function, ImagV
    int series_terms = 24;
};

// ---------------------------------------------------------------------------
// Pointwise spinor algebra in coefficient space
// ---------------------------------------------------------------------------

/// sigma_j applied fiberwise to a 2-column spinor coefficient block.
inline MatrixXcd sigma_apply(int j, const MatrixXcd& psi) {
    const Complex i(0, 1);
    MatrixXcd out(psi.rows(), 2);
    switch (j) {
        case 0: out.col(0) = psi.col(1); out.col(1) = psi.col(0); break;
        case 1: out.col(0) = -i * psi.col(1); out.col(1) = i * psi.col(0); break;
        default: out.col(0) = psi.col(0); out.col(1) = -psi.col(1); break;
    }
    return out;
}

/// Pointwise sesquilinear scalar conv(conj(u), v).
inline VectorXcd sesq(const SpatialBasis& b, const VectorXcd& u, const VectorXcd& v) {
    return b.conv(b.conj_field(u), v);
}

/// The three pointwise bilinears t_j = u^dag sigma_j v of two spinor fields.
inline std::array<VectorXcd, 3> sigma_bilinear(const SpatialBasis& b, const MatrixXcd& u,
                                               const MatrixXcd& v) {
    const Complex i(0, 1);
    std::array<VectorXcd, 3> t;
    const VectorXcd s01 = sesq(b, u.col(0), v.col(1));
    const VectorXcd s10 = sesq(b, u.col(1), v.col(0));
    t[0] = s01 + s10;
    t[1] = i * (s10 - s01);
    t[2] = sesq(b, u.col(0), v.col(0)) - sesq(b, u.col(1), v.col(1));
    return t;
}

/// q(Phi) as a 2-form on Y (components on {e_k ^ e_l}): s_j = (i/2) Phi^dag sigma_j Phi.
inline MatrixXcd q3_form(const SpatialBasis& b, const MatrixXcd& phi) {
    const auto t = sigma_bilinear(b, phi, phi);
    MatrixXcd out(b.modes(), 3);
    for (int j = 0; j < 3; ++j) out.col(j) = Complex(0, 0.5) * t[j];
    return out;
}

/// Polarization of q3_form at Phi in direction psi.
inline MatrixXcd Dq3_form(const SpatialBasis& b, const MatrixXcd& Phi, const MatrixXcd& psi) {
    const auto t1 = sigma_bilinear(b, psi, Phi);
    const auto t2 = sigma_bilinear(b, Phi, psi);
    MatrixXcd out(b.modes(), 3);
    for (int j = 0; j < 3; ++j) out.col(j) = Complex(0, 0.5) * (t1[j] + t2[j]);
    return out;
}

/// q(Psi) as a self-dual 2-form on the orthonormal basis {omega_j}: the same
/// bilinears scaled by 1/sqrt(2) (endo_to_sd of the endomorphism q).
inline MatrixXcd q_sd(const SpatialBasis& b, const MatrixXcd& psi) {
    return q3_form(b, psi) / std::sqrt(2.0);
}

inline MatrixXcd Dq_sd(const SpatialBasis& b, const MatrixXcd& Psi, const MatrixXcd& psi) {
    return Dq3_form(b, Psi, psi) / std::sqrt(2.0);
}

/// Clifford action of a (3-component) 1-form on a spinor: sum_j a_j (i sigma_j) psi.
inline MatrixXcd clifford3_mul(const SpatialBasis& b, const MatrixXcd& a3, const MatrixXcd& psi) {
    const Complex i(0, 1);
    MatrixXcd out = MatrixXcd::Zero(b.modes(), 2);
    for (int j = 0; j < 3; ++j) {
        const MatrixXcd sp = sigma_apply(j, psi);
        for (int c = 0; c < 2; ++c) out.col(c) += i * b.conv(a3.col(j), sp.col(c));
    }
    return out;
}

/// Dirac operator on Y: sum_j (i sigma_j)(d_j + B_j/2) psi; pass B = nullptr
/// for the flat operator.
inline MatrixXcd dirac3(const SpatialBasis& b, const MatrixXcd* B, const MatrixXcd& psi) {
    const Complex i(0, 1);
    MatrixXcd out = MatrixXcd::Zero(b.modes(), 2);
    for (int j = 0; j < 3; ++j) {
        MatrixXcd cov(b.modes(), 2);
        for (int c = 0; c < 2; ++c) {
            cov.col(c) = b.deriv(psi.col(c), j);
            if (B) cov.col(c) += 0.5 * b.conv(B->col(j), psi.col(c));
        }
        out += i * sigma_apply(j, cov);
    }
    return out;
}

/// Exterior derivative of a (3-component) 1-form: F_j = d_k a_l - d_l a_k, cyclic.
inline MatrixXcd curl3(const SpatialBasis& b, const MatrixXcd& a3) {
    static const int cyc[3][2] = {{1, 2}, {2, 0}, {0, 1}};
    MatrixXcd out(b.modes(), 3);
    for (int j = 0; j < 3; ++j) {
        const int k = cyc[j][0], l = cyc[j][1];
        out.col(j) = b.deriv(a3.col(l), k) - b.deriv(a3.col(k), l);
    }
    return out;
}

inline MatrixXcd grad3(const SpatialBasis& b, const VectorXcd& f) {
    MatrixXcd out(b.modes(), 3);
    for (int j = 0; j < 3; ++j) out.col(j) = b.deriv(f, j);
    return out;
}

/// Divergence sum_j d_j a_j (the negative of d* up to sign convention).
inline VectorXcd div3(const SpatialBasis& b, const MatrixXcd& a3) {
    VectorXcd out = VectorXcd::Zero(b.modes());
    for (int j = 0; j < 3; ++j) out += b.deriv(a3.col(j), j);
    return out;
}

/// Integral of the pointwise product of two scalar fields.
inline Complex integral_product(const SpatialBasis& b, const VectorXcd& f, const VectorXcd& g) {
    Complex s(0, 0);
    for (int m = 0; m < b.modes(); ++m) s += f[m] * g[b.neg(m)];
    return s;
}

// ---------------------------------------------------------------------------
// The nonlinear maps
// ---------------------------------------------------------------------------

/// 3-dimensional Seiberg-Witten map (F_B - q(Phi) - i h3, dirac_B Phi).
inline SWOutput3 sw3(const Configuration3& eta, const Field3* h3 = nullptr) {
    const SpatialBasis& b = eta.basis();
    SWOutput3 out(b);
    out.curv.coef = curl3(b, eta.B.coef) - q3_form(b, eta.Phi.coef);
    if (h3) out.curv.coef -= Complex(0, 1) * h3->coef;
    out.dirac.coef = dirac3(b, &eta.B.coef, eta.Phi.coef);
    return out;
}

/// 4-dimensional Seiberg-Witten map (F_A^+ - q(Psi) - i h, dirac_A Psi).
/// The self-dual components use the orthonormal basis {omega_j}; the Dirac
/// operator is (d_t + A_t/2) + sum_j (i sigma_j)(d_j + A_j/2).
inline SWOutput sw4(const Configuration& xi, const CylField* h = nullptr) {
    const SpatialBasis& b = xi.basis();
    SWOutput out(b, xi.chart(), xi.grid());
    const CylField Adot = time_deriv(xi.A);
    const CylField Psidot = time_deriv(xi.Psi);
    const Real inv_s2 = 1.0 / std::sqrt(2.0);
    for (int n = 0; n < xi.grid().n; ++n) {
        const MatrixXcd& A = xi.A.nodes[n].coef;
        const MatrixXcd& P = xi.Psi.nodes[n].coef;
        const MatrixXcd Asp = A.rightCols(3);
        const MatrixXcd F3 = curl3(b, Asp);
        MatrixXcd curv(b.modes(), 3);
        for (int j = 0; j < 3; ++j)
            curv.col(j) = inv_s2 * (Adot.nodes[n].coef.col(j + 1) - b.deriv(A.col(0), j) +
                                    F3.col(j));
        curv -= q_sd(b, P);
        if (h) curv -= Complex(0, 1) * h->nodes[n].coef;
        out.curv.nodes[n].coef = curv;

        MatrixXcd dr = Psidot.nodes[n].coef + dirac3(b, &Asp, P);
        for (int c = 0; c < 2; ++c) dr.col(c) += 0.5 * b.conv(A.col(0), P.col(c));
        out.dirac.nodes[n].coef = dr;
    }
    return out;
}

/// exp of an imaginary function field by truncated power series; exact for
/// spatially constant u, band-truncated otherwise.
inline VectorXcd exp_field(const SpatialBasis& b, const VectorXcd& u, int terms) {
    VectorXcd out = VectorXcd::Zero(b.modes());
    out[b.zero_mode()] = std::sqrt(b.spec().volume()); // the constant function 1
    VectorXcd pw = out;
    Real fact = 1.0;
    for (int k = 1; k <= terms; ++k) {
        pw = b.conv(pw, u);
        fact *= k;
        out += pw / fact;
    }
    return out;
}

/// Right action (A, Psi) . g = (A + 2 g^-1 dg, g^-1 Psi) with g = exp(u); for
/// U(1), g^-1 dg = du exactly and g^-1 = exp(-u).
inline Configuration gauge_act(const Configuration& xi, const GaugeTransform& g) {
    const SpatialBasis& b = xi.basis();
    Configuration out = xi;
    const CylField udot = time_deriv(g.u);
    for (int n = 0; n < xi.grid().n; ++n) {
        const VectorXcd& u = g.u.nodes[n].coef.col(0);
        out.A.nodes[n].coef.col(0) += 2.0 * udot.nodes[n].coef.col(0);
        const MatrixXcd du = grad3(b, u);
        for (int j = 0; j < 3; ++j) out.A.nodes[n].coef.col(j + 1) += 2.0 * du.col(j);
        const VectorXcd ginv = exp_field(b, VectorXcd(-u), g.series_terms);
        for (int c = 0; c < 2; ++c)
            out.Psi.nodes[n].coef.col(c) = b.conv(ginv, xi.Psi.nodes[n].coef.col(c));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Deformation operators
// ---------------------------------------------------------------------------

/// Degree-1 element of the Y complex (and, with kind TwoForm3, degree 2).
struct TangentY {
    Field3 a;
    Field3 phi;

    TangentY() = default;
    TangentY(const SpatialBasis& b, FieldKind form_kind)
        : a(b, form_kind), phi(b, FieldKind::Spinor, ValueType::CplxV) {}

    const SpatialBasis& basis() const { return *a.basis; }
    int dof() const { return a.dof() + phi.dof(); }
    Real norm() const { return std::hypot(a.norm(), phi.norm()); }

    VectorXd pack() const {
        VectorXd out(dof());
        out.head(a.dof()) = a.pack();
        out.tail(phi.dof()) = phi.pack();
        return out;
    }
    static TangentY unpack(const SpatialBasis& b, FieldKind form_kind, const VectorXd& d) {
        TangentY t(b, form_kind);
        t.a = Field3::unpack(b, form_kind, ValueType::ImagV, d.head(t.a.dof()));
        t.phi = Field3::unpack(b, FieldKind::Spinor, ValueType::CplxV, d.tail(t.phi.dof()));
        return t;
    }

    TangentY& operator+=(const TangentY& o) { a += o.a; phi += o.phi; return *this; }
    TangentY& operator-=(const TangentY& o) { a -= o.a; phi -= o.phi; return *this; }
    TangentY& operator*=(Real s) { a *= s; phi *= s; return *this; }
    friend TangentY operator+(TangentY x, const TangentY& y) { x += y; return x; }
    friend TangentY operator-(TangentY x, const TangentY& y) { x -= y; return x; }
    friend TangentY operator*(Real s, TangentY x) { x *= s; return x; }
};

/// D0 on Y at eta: f -> (2 df, -f Phi).
inline TangentY D0_Y(const Configuration3& eta, const Field3& f) {
    const SpatialBasis& b = eta.basis();
    TangentY out(b, FieldKind::OneForm3);
    out.a.coef = 2.0 * grad3(b, f.coef.col(0));
    for (int c = 0; c < 2; ++c)
        out.phi.coef.col(c) = -b.conv(f.coef.col(0), eta.Phi.coef.col(c));
    return out;
}

/// D1 on Y at eta: (a, phi) -> (da - Dq|_Phi(phi), a/2 . Phi + dirac_B phi).
inline TangentY D1_Y(const Configuration3& eta, const TangentY& t) {
    const SpatialBasis& b = eta.basis();
    TangentY out(b, FieldKind::TwoForm3);
    out.a.coef = curl3(b, t.a.coef) - Dq3_form(b, eta.Phi.coef, t.phi.coef);
    out.phi.coef = 0.5 * clifford3_mul(b, t.a.coef, eta.Phi.coef) +
                   dirac3(b, &eta.B.coef, t.phi.coef);
    return out;
}

/// Degree-1 (or with curv kinds degree-2) element of a 4-dimensional chart
/// complex: E0 = functions, E1 = 1-forms + plus spinors, E2 = self-dual
/// 2-forms + minus spinors.
struct Tangent4 {
    CylField a;
    CylField phi;

    Tangent4() = default;
    Tangent4(const SpatialBasis& b, Chart ch, const TimeGrid& g, bool degree2 = false)
        : a(b, ch, degree2 ? FieldKind::SelfDual2 : FieldKind::OneForm4, g),
          phi(b, ch, degree2 ? FieldKind::SpinorMinus : FieldKind::SpinorPlus, g) {}

    const SpatialBasis& basis() const { return a.basis(); }
    int dof() const { return a.dof() + phi.dof(); }
    Real norm() const { return std::hypot(a.norm(), phi.norm()); }

    VectorXd pack() const {
        VectorXd out(dof());
        out.head(a.dof()) = a.pack();
        out.tail(phi.dof()) = phi.pack();
        return out;
    }
    static Tangent4 unpack(const SpatialBasis& b, Chart ch, const TimeGrid& g, bool degree2,
                           const VectorXd& d) {
        Tangent4 t(b, ch, g, degree2);
        t.a = CylField::unpack(b, ch, t.a.kind, ValueType::ImagV, g, d.head(t.a.dof()));
        t.phi = CylField::unpack(b, ch, t.phi.kind, ValueType::CplxV, g, d.tail(t.phi.dof()));
        return t;
    }

    Tangent4& operator+=(const Tangent4& o) { a += o.a; phi += o.phi; return *this; }
    Tangent4& operator-=(const Tangent4& o) { a -= o.a; phi -= o.phi; return *this; }
    Tangent4& operator*=(Real s) { a *= s; phi *= s; return *this; }
    friend Tangent4 operator+(Tangent4 x, const Tangent4& y) { x += y; return x; }
    friend Tangent4 operator-(Tangent4 x, const Tangent4& y) { x -= y; return x; }
    friend Tangent4 operator*(Real s, Tangent4 x) { x *= s; return x; }
};

/// Per-node part of D0 (everything except the a_t = 2 df/dt coupling):
/// f -> (0, 2 grad f, -f Psi) at a fixed background spinor.
inline void D0_node(const SpatialBasis& b, const MatrixXcd& Psi, const VectorXcd& f,
                    MatrixXcd& a_out, MatrixXcd& phi_out) {
    a_out = MatrixXcd::Zero(b.modes(), 4);
    const MatrixXcd df = grad3(b, f);
    for (int j = 0; j < 3; ++j) a_out.col(j + 1) = 2.0 * df.col(j);
    phi_out.resize(b.modes(), 2);
    for (int c = 0; c < 2; ++c) phi_out.col(c) = -b.conv(f, Psi.col(c));
}

/// D0 on a 4-dimensional chart at xi: f -> (2 df, -f Psi).
inline Tangent4 D0_4(const Configuration& xi, const CylField& f) {
    const SpatialBasis& b = xi.basis();
    Tangent4 out(b, xi.chart(), xi.grid());
    const CylField fdot = time_deriv(f);
    for (int n = 0; n < xi.grid().n; ++n) {
        MatrixXcd an, pn;
        D0_node(b, xi.Psi.nodes[n].coef, f.nodes[n].coef.col(0), an, pn);
        an.col(0) += 2.0 * fdot.nodes[n].coef.col(0);
        out.a.nodes[n].coef = an;
        out.phi.nodes[n].coef = pn;
    }
    return out;
}

/// Clifford action of a 4-component 1-form block on a plus-spinor block:
/// a . psi = a_t psi + sum_j a_j (i sigma_j) psi.
inline MatrixXcd clifford4_mul(const SpatialBasis& b, const MatrixXcd& a4, const MatrixXcd& psi) {
    MatrixXcd out = clifford3_mul(b, a4.rightCols(3), psi);
    for (int c = 0; c < 2; ++c) out.col(c) += b.conv(a4.col(0), psi.col(c));
    return out;
}

/// D1 on a 4-dimensional chart at xi: (a, psi) -> (d+ a - Dq|_Psi(psi),
/// a/2 . Psi + dirac_A psi); the Frechet derivative of sw4.
/// Per-node part of D1 (everything except the adot / phidot stencil terms)
/// at the fixed background (A, Psi) of one time node.
inline void D1_node(const SpatialBasis& b, const MatrixXcd& A, const MatrixXcd& Psi,
                    const MatrixXcd& a, const MatrixXcd& psi,
                    MatrixXcd& curv_out, MatrixXcd& dirac_out) {
    const Real inv_s2 = 1.0 / std::sqrt(2.0);
    const MatrixXcd F3 = curl3(b, a.rightCols(3));
    curv_out.resize(b.modes(), 3);
    for (int j = 0; j < 3; ++j)
        curv_out.col(j) = inv_s2 * (F3.col(j) - b.deriv(a.col(0), j));
    curv_out -= Dq_sd(b, Psi, psi);

    const MatrixXcd Asp = A.rightCols(3);
    dirac_out = dirac3(b, &Asp, psi) + 0.5 * clifford4_mul(b, a, Psi);
    for (int c = 0; c < 2; ++c) dirac_out.col(c) += 0.5 * b.conv(A.col(0), psi.col(c));
}

inline Tangent4 D1_4(const Configuration& xi, const Tangent4& t) {
    const SpatialBasis& b = xi.basis();
    Tangent4 out(b, xi.chart(), xi.grid(), true);
    const CylField adot = time_deriv(t.a);
    const CylField phidot = time_deriv(t.phi);
    const Real inv_s2 = 1.0 / std::sqrt(2.0);
    for (int n = 0; n < xi.grid().n; ++n) {
        MatrixXcd curv, dr;
        D1_node(b, xi.A.nodes[n].coef, xi.Psi.nodes[n].coef, t.a.nodes[n].coef,
                t.phi.nodes[n].coef, curv, dr);
        for (int j = 0; j < 3; ++j) curv.col(j) += inv_s2 * adot.nodes[n].coef.col(j + 1);
        out.a.nodes[n].coef = curv;
        out.phi.nodes[n].coef = dr + phidot.nodes[n].coef;
    }
    return out;
}

/// Exact quadratic remainder of sw4: sw4(xi + t) - sw4(xi) - D1(xi)(t)
/// equals (-q(psi), a/2 . psi) for t = (a, psi), with no higher terms.
inline Tangent4 quadratic_remainder(const Tangent4& t) {
    const SpatialBasis& b = t.basis();
    Tangent4 out(b, t.a.chart, t.a.grid, true);
    for (int n = 0; n < t.a.grid.n; ++n) {
        out.a.nodes[n].coef = -q_sd(b, t.phi.nodes[n].coef);
        out.phi.nodes[n].coef =
            0.5 * clifford4_mul(b, t.a.nodes[n].coef, t.phi.nodes[n].coef);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSD, flow field, energy, Hessian
// ---------------------------------------------------------------------------

/// Chern-Simons-Dirac functional with background B0 = 0 (see the header
/// comment for the sign calibration).
inline Real csd(const Configuration3& eta, const Field3* h3 = nullptr) {
    const SpatialBasis& b = eta.basis();
    const MatrixXcd F = curl3(b, eta.B.coef);
    Complex t1(0, 0), t2(0, 0);
    for (int j = 0; j < 3; ++j) {
        t1 += integral_product(b, eta.B.coef.col(j), F.col(j));
        if (h3)
            t2 += integral_product(b, eta.B.coef.col(j), Complex(0, 1) * h3->coef.col(j));
    }
    const MatrixXcd D = dirac3(b, &eta.B.coef, eta.Phi.coef);
    Real t3 = 0;
    for (int c = 0; c < 2; ++c) t3 += eta.Phi.coef.col(c).dot(D.col(c)).real();
    return -0.5 * t1.real() + t2.real() + t3;
}

/// Velocity field of the temporal-gauge flow: (-*(F - q - i h3), -dirac Phi).
/// This is minus the CSD gradient in the doubled-spinor metric; its zeros are
/// exactly the zeros of sw3_h (the Hodge star is the identity on components
/// in the orthonormal bases).
inline TangentY flow_field(const Configuration3& eta, const Field3* h3 = nullptr) {
    const SWOutput3 r = sw3(eta, h3);
    TangentY v(eta.basis(), FieldKind::OneForm3);
    v.a.coef = -r.curv.coef;
    v.phi.coef = -r.dirac.coef;
    return v;
}

/// Energy of a time-indexed path of 3-dimensional configurations, with the
/// spinor kinetic term in the doubled metric: Int |Bdot|^2 + 2 |Phidot|^2.
inline Real energy(const std::vector<Configuration3>& path, Real dt) {
    const int n = static_cast<int>(path.size());
    if (n < 2) return 0.0;
    Real total = 0;
    for (int i = 0; i < n; ++i) {
        MatrixXcd Bd = MatrixXcd::Zero(path[0].B.coef.rows(), 3);
        MatrixXcd Pd = MatrixXcd::Zero(path[0].Phi.coef.rows(), 2);
        for (auto [o, c] : fd_stencil(i, n, dt)) {
            Bd += c * path[i + o].B.coef;
            Pd += c * path[i + o].Phi.coef;
        }
        const Real qw = (i == 0 || i == n - 1) ? 0.5 * dt : dt;
        total += qw * (Bd.squaredNorm() + 2.0 * Pd.squaredNorm());
    }
    return total;
}

/// Hessian of CSD at eta in packed E1 coordinates: the linearization of
/// minus flow_field, H(a, phi) = (*(da - Dq|_Phi(phi)), a/2 . Phi + dirac phi).
/// Assembled densely by applying the field operators to the coordinate basis.
inline MatrixXd hessian_csd(const Configuration3& eta, Real* residual_warn = nullptr) {
    const SpatialBasis& b = eta.basis();
    TangentY probe(b, FieldKind::OneForm3);
    const int n = probe.dof();
    MatrixXd H(n, n);
    VectorXd e = VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        e[i] = 1.0;
        TangentY t = TangentY::unpack(b, FieldKind::OneForm3, e);
        e[i] = 0.0;
        TangentY ht(b, FieldKind::OneForm3);
        ht.a.coef = curl3(b, t.a.coef) - Dq3_form(b, eta.Phi.coef, t.phi.coef);
        ht.phi.coef = 0.5 * clifford3_mul(b, t.a.coef, eta.Phi.coef) +
                      dirac3(b, &eta.B.coef, t.phi.coef);
        H.col(i) = ht.pack();
    }
    if (residual_warn) *residual_warn = sw3(eta).norm();
    return H;
}

/// Diagonal of the square root of the doubled-spinor metric in packed E1
/// coordinates (sqrt(2) on spinor dof).
inline VectorXd spinor_metric_half(const SpatialBasis& b) {
    TangentY probe(b, FieldKind::OneForm3);
    VectorXd g = VectorXd::Ones(probe.dof());
    g.tail(probe.phi.dof()).setConstant(std::sqrt(2.0));
    return g;
}

/// Eigenvalues of the CSD Hessian, symmetrized in the doubled-spinor metric.
/// Also reports the symmetry defect, which should vanish at critical points.
inline VectorXd hessian_spectrum(const Configuration3& eta, Real* asym = nullptr) {
    const MatrixXd H = hessian_csd(eta);
    const VectorXd g = spinor_metric_half(eta.basis());
    MatrixXd S = g.asDiagonal() * H * g.cwiseInverse().asDiagonal();
    if (asym) *asym = 0.5 * (S - S.transpose()).norm();
    const MatrixXd sym = 0.5 * (S + S.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
    return es.eigenvalues();
}

struct KappaResult {
    Real kappa = 0;        // 0.45 * smallest nonzero |eigenvalue|
    Real gap = 0;          // smallest nonzero |eigenvalue|
    int zero_modes = 0;    // |eigenvalue| < zero_tol (gauge orbit + harmonic)
    int gauge_dim = 0;     // numerical rank of D0
    int h1_dim = 0;        // zero_modes - gauge_dim
};

/// Spectral-gap bound kappa = 0.9 * (gap / 2); the kernel of the Hessian
/// contains the gauge orbit (dimension rank D0) plus the degree-1 harmonic
/// space, both excluded from the gap.
inline KappaResult kappa_bound(const Configuration3& eta, Real zero_tol = 1e-6) {
    const SpatialBasis& b = eta.basis();
    const VectorXd eig = hessian_spectrum(eta);
    KappaResult out;
    Real gap = std::numeric_limits<Real>::infinity();
    for (int i = 0; i < eig.size(); ++i) {
        if (std::abs(eig[i]) < zero_tol)
            ++out.zero_modes;
        else
            gap = std::min(gap, std::abs(eig[i]));
    }
    if (!std::isfinite(gap) || gap < 1e-6)
        throw InvalidParams("kappa_bound: degenerate critical point (no spectral gap)");
    // rank of D0 via SVD of its assembled matrix
    Field3 f(b, FieldKind::Function);
    MatrixXd D0m(TangentY(b, FieldKind::OneForm3).dof(), f.dof());
    VectorXd e = VectorXd::Zero(f.dof());
    for (int i = 0; i < f.dof(); ++i) {
        e[i] = 1.0;
        Field3 fi = Field3::unpack(b, FieldKind::Function, ValueType::ImagV, e);
        e[i] = 0.0;
        D0m.col(i) = D0_Y(eta, fi).pack();
    }
    Eigen::JacobiSVD<MatrixXd> svd(D0m);
    const Real tol = svd.singularValues()(0) * 1e-10;
    out.gauge_dim = static_cast<int>((svd.singularValues().array() > tol).count());
    out.h1_dim = out.zero_modes - out.gauge_dim;
    out.gap = gap;
    out.kappa = 0.9 * 0.5 * gap;
    return out;
}

/// Translation-invariant pullback of a 3-dimensional configuration to a
/// 4-dimensional chart: A = B (temporal gauge, A_t = 0), Psi = Phi at every
/// time node.
inline Configuration pullback_static(const Configuration3& eta, Chart ch, const TimeGrid& g) {
    Configuration xi(eta.basis(), ch, g);
    for (int n = 0; n < g.n; ++n) {
        xi.A.nodes[n].coef.rightCols(3) = eta.B.coef;
        xi.Psi.nodes[n].coef = eta.Phi.coef;
    }
    return xi;
}

/// Pullback of a real 2-form perturbation on Y to a self-dual perturbation
/// on a chart; the 1/sqrt(2) matches the orthonormal self-dual basis so that
/// static solutions of sw3_h3 solve sw4_h.
inline CylField pullback_perturbation(const Field3& h3, Chart ch, const TimeGrid& g) {
    CylField h(*h3.basis, ch, FieldKind::SelfDual2, ValueType::RealV, g);
    for (int n = 0; n < g.n; ++n) h.nodes[n].coef = h3.coef / std::sqrt(2.0);
    return h;
}

/// The closed-form perturbation making a constant spinor critical:
/// h3_j = -(1/2) Phi^dag sigma_j Phi (a constant real 2-form when Phi is
/// constant); then q3(Phi) + i h3 = 0, so sw3_h3(B = 0, Phi) = 0 whenever
/// dirac Phi = 0.
inline Field3 matching_perturbation(const SpatialBasis& b, const MatrixXcd& phi) {
    Field3 h3(b, FieldKind::TwoForm3, ValueType::RealV);
    const auto t = sigma_bilinear(b, phi, phi);
    for (int j = 0; j < 3; ++j) h3.coef.col(j) = -0.5 * t[j];
    return h3;
}

/// Formal dimension (c1^2 - 2 chi - 3 sigma) / 4, kept as a reduced rational.
struct FormalDim {
    int num = 0, den = 1;
    bool integral() const { return den == 1; }
    friend bool operator==(const FormalDim& a, const FormalDim& b) {
        return a.num == b.num && a.den == b.den;
    }
};

inline FormalDim formal_dimension(int c1sq, int chi, int sigma) {
    int num = c1sq - 2 * chi - 3 * sigma, den = 4;
    const int g = std::gcd(std::abs(num), den);
    if (g > 1) { num /= g; den /= g; }
    return {num, den};
}

} // namespace swglue
