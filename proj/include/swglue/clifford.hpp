#pragma once

// Fiberwise Clifford algebra in dimensions 3 and 4: gamma matrices, Clifford
// multiplication of 1-forms on spinors, the quadratic map q with its
// polarization, and the dotted-wedge action of a 1-form on a (1-form, spinor)
// pair.
//
// Conventions (fixed once, used everywhere):
//  * gamma3(e_j) = i * sigma_j (Pauli matrices), so e_i e_j + e_j e_i =
//    -2 delta_ij exactly.
//  * On 4-dimensional charts the spinor bundles split as S+ (+) S-; Clifford
//    multiplication by dt is the identity pairing S+ -> S- (and -identity
//    S- -> S+), multiplication by e_j is i*sigma_j both ways.
//  * Orientation dt ^ e1 ^ e2 ^ e3; the self-dual 2-form basis is
//    omega_j = (dt ^ e_j + *(dt ^ e_j)) / sqrt(2), an orthonormal triple.
//  * On S+ the Clifford action of omega_j is -sqrt(2) i sigma_j; on the
//    3-manifold the action of e_k ^ e_l (cyclic jkl) is -i sigma_j.  These two
//    facts define the 2-form <-> traceless-endomorphism conversions below.

#include "common.hpp"

#include <array>

namespace swglue {

using Spinor2 = Eigen::Vector2cd;
using TracelessEndo = Eigen::Matrix2cd;

/// One fiber of a (possibly complex-valued) 1-form on a 4-dimensional chart:
/// coefficients on {dt, e1, e2, e3}.
using OneForm4 = Eigen::Vector4cd;
/// Coefficients of a self-dual 2-form on the orthonormal basis {omega_j}.
using SelfDual3 = Eigen::Vector3cd;

/// Concrete gamma representation in dimensions 3 and 4.
struct GammaRep {
    std::array<Eigen::Matrix2cd, 3> gamma3;              // e_j acting on S
    std::array<Eigen::Matrix2cd, 4> gamma4_plus_to_minus; // {dt, e_j}: S+ -> S-
    std::array<Eigen::Matrix2cd, 4> gamma4_minus_to_plus; // {dt, e_j}: S- -> S+
};

inline const std::array<Eigen::Matrix2cd, 3>& pauli() {
    static const std::array<Eigen::Matrix2cd, 3> s = [] {
        std::array<Eigen::Matrix2cd, 3> p;
        const Complex i(0, 1);
        p[0] << 0, 1, 1, 0;
        p[1] << 0, -i, i, 0;
        p[2] << 1, 0, 0, -1;
        return p;
    }();
    return s;
}

inline const GammaRep& gamma_rep() {
    static const GammaRep rep = [] {
        GammaRep r;
        const Complex i(0, 1);
        const Eigen::Matrix2cd id = Eigen::Matrix2cd::Identity();
        for (int j = 0; j < 3; ++j) r.gamma3[j] = i * pauli()[j];
        r.gamma4_plus_to_minus[0] = id;
        r.gamma4_minus_to_plus[0] = -id;
        for (int j = 0; j < 3; ++j) {
            r.gamma4_plus_to_minus[j + 1] = i * pauli()[j];
            r.gamma4_minus_to_plus[j + 1] = i * pauli()[j];
        }
        return r;
    }();
    return rep;
}

/// Clifford multiplication of a 4-dimensional 1-form fiber on a plus spinor.
inline Spinor2 clifford_mul(const GammaRep& rep, const OneForm4& omega, const Spinor2& psi) {
    Spinor2 out = Spinor2::Zero();
    for (int m = 0; m < 4; ++m) out += omega[m] * (rep.gamma4_plus_to_minus[m] * psi);
    return out;
}

/// Clifford multiplication of a 4-dimensional 1-form fiber on a minus spinor.
inline Spinor2 clifford_mul_minus(const GammaRep& rep, const OneForm4& omega, const Spinor2& psi) {
    Spinor2 out = Spinor2::Zero();
    for (int m = 0; m < 4; ++m) out += omega[m] * (rep.gamma4_minus_to_plus[m] * psi);
    return out;
}

/// Clifford multiplication of a 3-dimensional 1-form fiber on a spinor.
inline Spinor2 clifford_mul3(const GammaRep& rep, const Eigen::Vector3cd& omega, const Spinor2& psi) {
    Spinor2 out = Spinor2::Zero();
    for (int j = 0; j < 3; ++j) out += omega[j] * (rep.gamma3[j] * psi);
    return out;
}

/// q(psi) = psi (x) psi* - 1/2 |psi|^2 I; hermitian, traceless, with operator
/// norm exactly |psi|^2 / 2.
inline TracelessEndo q(const Spinor2& psi) {
    return psi * psi.adjoint() - 0.5 * psi.squaredNorm() * Eigen::Matrix2cd::Identity();
}

/// Symmetric bilinear polarization of q:
///   flat(u, v) = 1/2 (u v* + v u*) - 1/2 Re<u, v> I,
/// so that flat(psi, psi) = q(psi) and
/// q(psi1) - q(psi2) = flat(psi1 + psi2, psi1 - psi2).
inline TracelessEndo flat(const Spinor2& u, const Spinor2& v) {
    const Real re = 0.5 * (u.dot(v) + v.dot(u)).real();
    return 0.5 * (u * v.adjoint() + v * u.adjoint()) -
           0.5 * re * Eigen::Matrix2cd::Identity();
}

/// Derivative of q at Psi in the direction psi; equals flat(2 Psi, psi).
inline TracelessEndo Dq(const Spinor2& Psi, const Spinor2& psi) {
    return flat(2.0 * Psi, psi);
}

/// omega dotwedge (a, psi) = ((omega ^ a)^+, omega . psi).  The self-dual part
/// is returned on the orthonormal basis {omega_j}.
inline std::pair<SelfDual3, Spinor2>
dot_wedge(const GammaRep& rep, const OneForm4& omega, const OneForm4& a, const Spinor2& psi) {
    SelfDual3 sd;
    static const int cyc[3][2] = {{1, 2}, {2, 0}, {0, 1}};
    const Real inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (int j = 0; j < 3; ++j) {
        const int k = cyc[j][0], l = cyc[j][1];
        sd[j] = inv_sqrt2 * (omega[0] * a[j + 1] - omega[j + 1] * a[0] +
                             omega[k + 1] * a[l + 1] - omega[l + 1] * a[k + 1]);
    }
    return {sd, clifford_mul(rep, omega, psi)};
}

/// Self-dual 2-form (basis {omega_j}) acting on S+ as an endomorphism:
/// rho(omega_j)|_{S+} = -sqrt(2) i sigma_j.
inline TracelessEndo sd_to_endo(const SelfDual3& s) {
    const Complex i(0, 1);
    TracelessEndo e = TracelessEndo::Zero();
    for (int j = 0; j < 3; ++j) e += s[j] * (-std::sqrt(2.0) * i) * pauli()[j];
    return e;
}

/// Inverse of sd_to_endo on traceless endomorphisms.
inline SelfDual3 endo_to_sd(const TracelessEndo& e) {
    const Complex i(0, 1);
    SelfDual3 s;
    for (int j = 0; j < 3; ++j) {
        const Complex ej = 0.5 * (e * pauli()[j]).trace();
        s[j] = i * ej / std::sqrt(2.0);
    }
    return s;
}

/// 2-form on Y (basis f_j = e_k ^ e_l, cyclic) acting on S:
/// rho(f_j) = -i sigma_j.
inline TracelessEndo form2_to_endo3(const Eigen::Vector3cd& s) {
    const Complex i(0, 1);
    TracelessEndo e = TracelessEndo::Zero();
    for (int j = 0; j < 3; ++j) e += s[j] * (-i) * pauli()[j];
    return e;
}

/// Inverse of form2_to_endo3 on traceless endomorphisms.
inline Eigen::Vector3cd endo3_to_form2(const TracelessEndo& e) {
    const Complex i(0, 1);
    Eigen::Vector3cd s;
    for (int j = 0; j < 3; ++j) s[j] = i * 0.5 * (e * pauli()[j]).trace();
    return s;
}

/// Operator norm of a 2x2 matrix (largest singular value).
inline Real op_norm2(const Eigen::Matrix2cd& m) {
    return m.jacobiSvd().singularValues()(0);
}

} // namespace swglue
