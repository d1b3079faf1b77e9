#pragma once

// Finite-dimensional Hodge theory for the discrete deformation complexes
//
//     0 -> E^0 --D0--> E^1 --D1--> E^2 -> 0
//
// with weighted inner products: parametrices L (left inverse of D0) and R
// (right inverse of D1 off the cokernel), and the projections Pi^1, Pi^2 onto
// the weighted harmonic spaces, satisfying the chain-homotopy identities
//
//     L D0 = I,   D0 L + R D1 = I - Pi^1,   D1 R = I - Pi^2.
//
// Two realizations share these contracts:
//   * DenseComplex: explicit matrices, SVD-based construction; used for the
//     Y-level complex, for small oracle checks, and for harmonic bases.
//   * ChartComplex: the 4d chart complexes at a configuration, represented
//     block-banded in time (dense within a time node, stencil couplings
//     between nodes) and inverted through banded Cholesky factorizations of
//     the weighted normal operators.
//
// Conventions: all vectors are the real packed coordinates of fields
// (Field3::pack per node); Gram matrices of the chart complexes are diagonal
// in these coordinates (spatial Sobolev symbol x exponential time weight x
// trapezoid quadrature). Weighted adjoints are always formed through the
// Grams, never the plain transpose.

#include "swmap.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace swglue {

// ---------------------------------------------------------------------------
// Dense complexes
// ---------------------------------------------------------------------------

struct DenseComplex {
    MatrixXd D0; // E0 -> E1
    MatrixXd D1; // E1 -> E2
    MatrixXd G0, G1, G2; // SPD Grams
    Chart chart = Chart::Glued;
    Real delta = 0.0;
    bool expect_regular = false; // pieces: H^2 must vanish

    int n0() const { return static_cast<int>(D0.cols()); }
    int n1() const { return static_cast<int>(D1.cols()); }
    int n2() const { return static_cast<int>(D1.rows()); }
};

struct DenseParametrices {
    MatrixXd L;   // E1 -> E0
    MatrixXd R;   // E2 -> E1
    MatrixXd Pi1; // E1 -> E1
    MatrixXd Pi2; // E2 -> E2
    int rank0 = 0, rank1 = 0;
    Real sv_threshold0 = 0, sv_threshold1 = 0;
    Real d1d0_defect = 0; // ||D1 D0||, recorded rather than assumed zero
};

namespace detail {

/// Weighted pseudoinverse of A : (E_a, Ga) -> (E_b, Gb) by SVD in
/// G-orthonormal coordinates. Also returns the Gb-orthogonal projection onto
/// Im A. Singular values below sqrt(eps) * sigma_max count as zero.
struct WeightedPinv {
    MatrixXd pinv;    // E_b -> E_a
    MatrixXd proj_im; // E_b -> E_b
    int rank = 0;
    Real threshold = 0;
};

inline WeightedPinv weighted_pinv(const MatrixXd& A, const MatrixXd& Ga, const MatrixXd& Gb) {
    const int na = static_cast<int>(A.cols());
    const int nb = static_cast<int>(A.rows());
    Eigen::LLT<MatrixXd> la(Ga), lb(Gb);
    if (la.info() != Eigen::Success || lb.info() != Eigen::Success)
        throw InvalidParams("weighted_pinv: Gram matrix not positive definite");
    const MatrixXd La = la.matrixL();
    const MatrixXd Lb = lb.matrixL();

    WeightedPinv out;
    if (na == 0) {
        out.pinv = MatrixXd::Zero(0, nb);
        out.proj_im = MatrixXd::Zero(nb, nb);
        return out;
    }
    // A in orthonormal coordinates: x~ = La^T x, y~ = Lb^T y.
    MatrixXd At = Lb.transpose() * A;
    At = La.triangularView<Eigen::Lower>().solve(At.transpose()).transpose();

    Eigen::JacobiSVD<MatrixXd> svd(At, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VectorXd& sv = svd.singularValues();
    out.threshold = std::sqrt(std::numeric_limits<Real>::epsilon()) *
                    (sv.size() ? sv(0) : 0.0);
    int r = 0;
    while (r < sv.size() && sv(r) > out.threshold) ++r;
    out.rank = r;

    const MatrixXd Ur = svd.matrixU().leftCols(r);
    const MatrixXd Vr = svd.matrixV().leftCols(r);
    const MatrixXd pinv_t = Vr * sv.head(r).cwiseInverse().asDiagonal() * Ur.transpose();
    // Back to original coordinates: pinv = La^{-T} pinv_t Lb^T.
    out.pinv = La.transpose().triangularView<Eigen::Upper>().solve(pinv_t) * Lb.transpose();
    // proj = Lb^{-T} Ur Ur^T Lb^T.
    out.proj_im =
        Lb.transpose().triangularView<Eigen::Upper>().solve(MatrixXd(Ur * Ur.transpose())) *
        Lb.transpose();
    return out;
}

} // namespace detail

/// Build L, R, Pi^1, Pi^2 for a dense complex.
inline DenseParametrices build_parametrices(const DenseComplex& c) {
    DenseParametrices p;
    const auto p0 = detail::weighted_pinv(c.D0, c.G0, c.G1);
    if (p0.rank < c.n0())
        throw RankDeficient("D0 has a kernel (H^0 != 0, reducible point): rank " +
                            std::to_string(p0.rank) + " < " + std::to_string(c.n0()));
    const auto p1 = detail::weighted_pinv(c.D1, c.G1, c.G2);
    p.L = p0.pinv;
    p.R = p1.pinv;
    p.Pi2 = MatrixXd::Identity(c.n2(), c.n2()) - p1.proj_im;
    const int h2 = c.n2() - p1.rank;
    if (c.expect_regular && h2 > 0)
        throw ObstructionOnPiece("piece complex has H^2 of dimension " + std::to_string(h2));
    p.Pi1 = MatrixXd::Identity(c.n1(), c.n1()) - c.D0 * p.L - p.R * c.D1;
    p.rank0 = p0.rank;
    p.rank1 = p1.rank;
    p.sv_threshold0 = p0.threshold;
    p.sv_threshold1 = p1.threshold;
    p.d1d0_defect = c.n0() ? (c.D1 * c.D0).norm() : 0.0;
    return p;
}

// ---------------------------------------------------------------------------
// The Y-level complex and its harmonic basis
// ---------------------------------------------------------------------------

/// Assemble the dense deformation complex of E(Y) at eta (plain L^2 Grams).
inline DenseComplex assemble_Y_complex(const Configuration3& eta) {
    const SpatialBasis& b = eta.basis();
    const int M = b.modes();
    const int n0 = M;
    const int n1 = 7 * M;
    DenseComplex c;
    c.D0.resize(n1, n0);
    for (int i = 0; i < n0; ++i) {
        VectorXd e = VectorXd::Zero(n0);
        e(i) = 1.0;
        Field3 f = Field3::unpack(b, FieldKind::Function, ValueType::ImagV, e);
        c.D0.col(i) = D0_Y(eta, f).pack();
    }
    c.D1.resize(n1, n1);
    for (int i = 0; i < n1; ++i) {
        VectorXd e = VectorXd::Zero(n1);
        e(i) = 1.0;
        TangentY t = TangentY::unpack(b, FieldKind::OneForm3, e);
        c.D1.col(i) = D1_Y(eta, t).pack();
    }
    c.G0 = MatrixXd::Identity(n0, n0);
    c.G1 = MatrixXd::Identity(n1, n1);
    c.G2 = MatrixXd::Identity(n1, n1);
    return c;
}

/// Orthonormal basis of the degree-1 harmonic space Ker D1 ^ Ker (D0)* of a
/// dense complex (G1-orthonormal vectors as columns).
struct HarmonicBasis {
    MatrixXd vecs; // n1 x dim
    int dim = 0;
    Real residual = 0; // max over basis of ||D1 h|| + ||(D0)* h||
};

inline HarmonicBasis harmonic_basis(const DenseComplex& c) {
    Eigen::LLT<MatrixXd> l0(c.G0), l1(c.G1), l2(c.G2);
    const MatrixXd L1 = l1.matrixL();
    // Orthonormal coordinates on E^1; harmonic = Ker D1~ ^ Ker (D0~)^T.
    MatrixXd D1t = MatrixXd(l2.matrixL()).transpose() * c.D1;
    D1t = L1.triangularView<Eigen::Lower>().solve(D1t.transpose()).transpose();
    MatrixXd D0t = L1.transpose() * c.D0;
    D0t = MatrixXd(l0.matrixL()).triangularView<Eigen::Lower>().solve(D0t.transpose()).transpose();

    MatrixXd S(D1t.rows() + D0t.cols(), c.n1());
    S.topRows(D1t.rows()) = D1t;
    S.bottomRows(D0t.cols()) = D0t.transpose();
    Eigen::JacobiSVD<MatrixXd> svd(S, Eigen::ComputeFullV);
    const VectorXd& sv = svd.singularValues();
    const Real thresh = std::sqrt(std::numeric_limits<Real>::epsilon()) *
                        (sv.size() ? sv(0) : 0.0);
    int r = 0;
    while (r < sv.size() && sv(r) > thresh) ++r;
    HarmonicBasis h;
    h.dim = c.n1() - r;
    const MatrixXd Vt = svd.matrixV().rightCols(h.dim);
    h.vecs = L1.transpose().triangularView<Eigen::Upper>().solve(Vt);
    for (int i = 0; i < h.dim; ++i) {
        const VectorXd v = h.vecs.col(i);
        h.residual = std::max(h.residual, (c.D1 * v).norm() + (D0t.transpose() * L1.transpose() * v).norm());
    }
    return h;
}

// ---------------------------------------------------------------------------
// dt-wedge of a Y-harmonic vector and the explicit cylinder projection
// ---------------------------------------------------------------------------

/// dt wedge-dot of a degree-1 Y-tangent h = (a, phi): the form part lands on
/// the self-dual basis through the 1/sqrt(2) projection of dt ^ a and the
/// spinor part is carried to S^- with the matching 1/sqrt(2), so every time
/// slice of the model is E^1(Y) scaled by a uniform 1/sqrt(2). With that
/// scaling the slice norm of a unit h is exactly 1/2, which is what the
/// normalization c^2 Int e^{-delta tau_o} = 2 of the cylinder projection
/// assumes.
inline Tangent4 dt_wedge_cyl(const SpatialBasis& b, const TangentY& h, Chart ch,
                             const TimeGrid& g) {
    Tangent4 w(b, ch, g, true);
    const Real inv_s2 = 1.0 / std::sqrt(2.0);
    for (int n = 0; n < g.n; ++n) {
        w.a.nodes[n].coef = inv_s2 * h.a.coef;
        w.phi.nodes[n].coef = inv_s2 * h.phi.coef;
    }
    return w;
}

/// Explicit projection onto the span of the model harmonics on the cylinder:
/// Pi^2_o(zeta) = c^2 sum_i e^{-delta tau_o} (dt ^. h_i) Int <zeta, dt ^. h_i>,
/// where c is normalized by c^2 Int e^{-delta tau_o} = 2 and the pairing is
/// the plain (unweighted) L^2 inner product of the chart.
inline Tangent4 pi2_cylinder(const Tangent4& zeta, const HarmonicBasis& basis,
                             const SpatialBasis& b, Real c, Real delta,
                             const TimeCoord& tau_o) {
    const TimeGrid& g = zeta.a.grid;
    Tangent4 out(b, zeta.a.chart, g, true);
    for (int i = 0; i < basis.dim; ++i) {
        const TangentY h = TangentY::unpack(b, FieldKind::OneForm3, basis.vecs.col(i));
        const Tangent4 w = dt_wedge_cyl(b, h, zeta.a.chart, g);
        Real pair = 0;
        for (int n = 0; n < g.n; ++n)
            pair += g.qw(n) * (zeta.a.nodes[n].pack().dot(w.a.nodes[n].pack()) +
                               zeta.phi.nodes[n].pack().dot(w.phi.nodes[n].pack()));
        for (int n = 0; n < g.n; ++n) {
            const Real amp = c * c * std::exp(-delta * tau_o(g.t(n))) * pair;
            out.a.nodes[n].coef += amp * w.a.nodes[n].coef;
            out.phi.nodes[n].coef += amp * w.phi.nodes[n].coef;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Packed coordinates and diagonal Grams for 4d chart complexes
// ---------------------------------------------------------------------------

/// Diagonal of a per-mode multiplier in packed coordinates: the multiplier
/// s(m) must satisfy s(m) = s(-m), under which packing diagonalizes it.
inline VectorXd packed_symbol(const SpatialBasis& b, FieldKind kind, ValueType vt,
                              const VectorXd& mode_weight) {
    Field3 proto(b, kind, vt);
    const int d = proto.dof();
    VectorXd out(d);
    for (int p = 0; p < d; ++p) {
        VectorXd e = VectorXd::Zero(d);
        e(p) = 1.0;
        Field3 f = Field3::unpack(b, kind, vt, e);
        for (int c = 0; c < f.ncomp(); ++c)
            f.coef.col(c) = f.coef.col(c).cwiseProduct(mode_weight.cast<Complex>());
        out(p) = f.pack()(p);
    }
    return out;
}

/// Sobolev symbol (1 + |k|^2)^k per mode.
inline VectorXd sobolev_mode_weight(const SpatialBasis& b, int k) {
    VectorXd w(b.modes());
    for (int m = 0; m < b.modes(); ++m) {
        Real k2 = 0;
        for (int j = 0; j < 3; ++j) k2 += std::norm(b.dfactor(m, j));
        w(m) = std::pow(1.0 + k2, k);
    }
    return w;
}

/// Node-wise packing of the chart spaces (contiguous per time node):
/// E^0 node = [f], E^1 node = [a_t a_1 a_2 a_3 psi+], E^2 node = [sd psi-].
inline VectorXd pack_nodes(const CylField& x) {
    return x.pack(); // CylField::pack is already node-contiguous
}

inline VectorXd pack_nodes(const Tangent4& t) {
    const int na = t.a.nodes[0].dof(), np = t.phi.nodes[0].dof();
    const int nd = na + np;
    VectorXd out(t.a.grid.n * nd);
    for (int n = 0; n < t.a.grid.n; ++n) {
        out.segment(n * nd, na) = t.a.nodes[n].pack();
        out.segment(n * nd + na, np) = t.phi.nodes[n].pack();
    }
    return out;
}

inline Tangent4 unpack_nodes(const SpatialBasis& b, Chart ch, const TimeGrid& g, bool degree2,
                             const VectorXd& v) {
    Tangent4 t(b, ch, g, degree2);
    const int na = t.a.nodes[0].dof(), np = t.phi.nodes[0].dof();
    const int nd = na + np;
    for (int n = 0; n < g.n; ++n) {
        t.a.nodes[n] = Field3::unpack(b, t.a.kind, t.a.vt, v.segment(n * nd, na));
        t.phi.nodes[n] = Field3::unpack(b, t.phi.kind, t.phi.vt, v.segment(n * nd + na, np));
    }
    return t;
}

// ---------------------------------------------------------------------------
// Block-banded operators in time
// ---------------------------------------------------------------------------

/// A chart operator of the form (D x)_n = P_n x_n + sum_s w_{n,s} T x_{n+s},
/// i.e. a node-wise dense part plus a fixed block T carried by the time
/// stencil. Covers D0 (T = 2 on the a_t rows) and D1 (T = the adot / psidot
/// insertions).
struct ChartOp {
    TimeGrid g;
    int in_nd = 0, out_nd = 0;
    std::vector<int> pidx;                  // node -> index into P (backgrounds dedup)
    std::vector<MatrixXd> P;                // distinct node-wise dense blocks
    std::vector<Eigen::Triplet<Real>> Ttrip; // sparse entries of T
    std::vector<std::vector<std::pair<int, Real>>> st; // d/dt stencil per node

    int reach() const {
        int r = 0;
        for (const auto& row : st)
            for (auto [o, c] : row) r = std::max(r, std::abs(o));
        return r;
    }
    int in_dof() const { return g.n * in_nd; }
    int out_dof() const { return g.n * out_nd; }

    VectorXd apply(const VectorXd& x) const {
        VectorXd y = VectorXd::Zero(out_dof());
        for (int n = 0; n < g.n; ++n) {
            y.segment(n * out_nd, out_nd) = P[pidx[n]] * x.segment(n * in_nd, in_nd);
            for (auto [o, c] : st[n]) {
                const auto xm = x.segment((n + o) * in_nd, in_nd);
                for (const auto& t : Ttrip)
                    y(n * out_nd + t.row()) += c * t.value() * xm(t.col());
            }
        }
        return y;
    }
    VectorXd applyT(const VectorXd& y) const {
        VectorXd x = VectorXd::Zero(in_dof());
        for (int n = 0; n < g.n; ++n) {
            x.segment(n * in_nd, in_nd) +=
                P[pidx[n]].transpose() * y.segment(n * out_nd, out_nd);
            for (auto [o, c] : st[n]) {
                auto xm = x.segment((n + o) * in_nd, in_nd);
                for (const auto& t : Ttrip)
                    xm(t.col()) += c * t.value() * y(n * out_nd + t.row());
            }
        }
        return x;
    }
};

/// Symmetric block-banded matrix (lower blocks stored) with in-place block
/// Cholesky factorization and solve.
struct BlockBandedSym {
    int nb = 0, bs = 0, hb = 0;
    std::vector<MatrixXd> blk; // blk[i * (hb+1) + d] = block(i, i-d)
    bool factored = false;

    void init(int nblocks, int bsize, int halfband) {
        nb = nblocks;
        bs = bsize;
        hb = halfband;
        blk.assign(static_cast<std::size_t>(nb) * (hb + 1), MatrixXd::Zero(bs, bs));
        factored = false;
    }
    MatrixXd& at(int i, int j) { return blk[static_cast<std::size_t>(i) * (hb + 1) + (i - j)]; }
    const MatrixXd& at(int i, int j) const {
        return blk[static_cast<std::size_t>(i) * (hb + 1) + (i - j)];
    }

    void add_shift(Real sigma) {
        for (int i = 0; i < nb; ++i) at(i, i).diagonal().array() += sigma;
    }

    /// Matrix-vector product (only valid before factorization).
    VectorXd matvec(const VectorXd& x) const {
        VectorXd y = VectorXd::Zero(x.size());
        for (int i = 0; i < nb; ++i) {
            auto yi = y.segment(static_cast<std::ptrdiff_t>(i) * bs, bs);
            for (int j = std::max(0, i - hb); j <= i; ++j) {
                const auto xj = x.segment(static_cast<std::ptrdiff_t>(j) * bs, bs);
                yi.noalias() += at(i, j) * xj;
                if (j < i)
                    y.segment(static_cast<std::ptrdiff_t>(j) * bs, bs).noalias() +=
                        at(i, j).transpose() *
                        x.segment(static_cast<std::ptrdiff_t>(i) * bs, bs);
            }
        }
        return y;
    }

    void factorize() {
        for (int i = 0; i < nb; ++i) {
            for (int j = std::max(0, i - hb); j <= i; ++j) {
                MatrixXd m = at(i, j);
                for (int k = std::max(0, i - hb); k < j; ++k) {
                    if (k < j - hb) continue;
                    m.noalias() -= at(i, k) * at(j, k).transpose();
                }
                if (j < i) {
                    // block(i,j) = m * L_jj^{-T}
                    at(i, j) = at(j, j)
                                   .triangularView<Eigen::Lower>()
                                   .solve(m.transpose())
                                   .transpose();
                } else {
                    Eigen::LLT<MatrixXd> llt(m);
                    if (llt.info() != Eigen::Success)
                        throw RankDeficient("block Cholesky broke down at node " +
                                            std::to_string(i));
                    at(i, i) = llt.matrixL();
                }
            }
        }
        factored = true;
    }

    VectorXd solve(const VectorXd& rhs) const {
        VectorXd y = rhs;
        for (int i = 0; i < nb; ++i) {
            auto yi = y.segment(static_cast<std::ptrdiff_t>(i) * bs, bs);
            for (int k = std::max(0, i - hb); k < i; ++k)
                yi.noalias() -= at(i, k) * y.segment(static_cast<std::ptrdiff_t>(k) * bs, bs);
            at(i, i).triangularView<Eigen::Lower>().solveInPlace(yi);
        }
        for (int i = nb - 1; i >= 0; --i) {
            auto yi = y.segment(static_cast<std::ptrdiff_t>(i) * bs, bs);
            for (int k = i + 1; k < std::min(nb, i + hb + 1); ++k)
                yi.noalias() -=
                    at(k, i).transpose() * y.segment(static_cast<std::ptrdiff_t>(k) * bs, bs);
            at(i, i).transpose().triangularView<Eigen::Upper>().solveInPlace(yi);
        }
        return y;
    }
};

namespace detail {

inline MatrixXd t_dense(const ChartOp& A) {
    MatrixXd T = MatrixXd::Zero(A.out_nd, A.in_nd);
    for (const auto& t : A.Ttrip) T(t.row(), t.col()) += t.value();
    return T;
}

/// S = A diag(win)^{-1} A^T with win_n = omega_n * s_in (block-banded,
/// half-bandwidth 2 * reach).
inline BlockBandedSym normal_outer(const ChartOp& A, const VectorXd& s_in,
                                   const VectorXd& omega) {
    const int n = A.g.n, r = A.reach();
    BlockBandedSym S;
    S.init(n, A.out_nd, 2 * r);
    const VectorXd si = s_in.cwiseInverse();
    const MatrixXd T = t_dense(A);
    const MatrixXd TSi = T * si.asDiagonal();
    const MatrixXd TST = TSi * T.transpose();
    std::vector<MatrixXd> PD(A.P.size()), PT(A.P.size());
    for (std::size_t p = 0; p < A.P.size(); ++p) {
        const MatrixXd PS = A.P[p] * si.asDiagonal();
        PD[p] = PS * A.P[p].transpose();
        PT[p] = PS * T.transpose();
    }
    // stencil weight of node k in row n
    auto w = [&](int nrow, int k) -> Real {
        for (auto [o, c] : A.st[nrow])
            if (nrow + o == k) return c;
        return 0.0;
    };
    for (int i = 0; i < n; ++i) {
        for (int j = std::max(0, i - S.hb); j <= i; ++j) {
            MatrixXd& B = S.at(i, j);
            if (i == j) B += PD[A.pidx[i]] / omega(i);
            const Real wji = w(j, i);
            if (wji != 0.0) B += (wji / omega(i)) * PT[A.pidx[i]];
            const Real wij = w(i, j);
            if (wij != 0.0) B += (wij / omega(j)) * PT[A.pidx[j]].transpose();
            for (int k = std::max(0, std::max(i, j) - r); k < std::min(n, std::min(i, j) + r + 1);
                 ++k) {
                const Real c = w(i, k) * w(j, k);
                if (c != 0.0) B += (c / omega(k)) * TST;
            }
        }
    }
    return S;
}

/// S = A^T diag(wout) A with wout_k = omega_k * s_out.
inline BlockBandedSym normal_inner(const ChartOp& A, const VectorXd& s_out,
                                   const VectorXd& omega) {
    const int n = A.g.n, r = A.reach();
    BlockBandedSym S;
    S.init(n, A.in_nd, 2 * r);
    const MatrixXd T = t_dense(A);
    const MatrixXd ST = s_out.asDiagonal() * T;
    const MatrixXd TST = T.transpose() * ST;
    std::vector<MatrixXd> PSP(A.P.size()), PST(A.P.size());
    for (std::size_t p = 0; p < A.P.size(); ++p) {
        PSP[p] = A.P[p].transpose() * s_out.asDiagonal() * A.P[p];
        PST[p] = A.P[p].transpose() * ST;
    }
    auto w = [&](int nrow, int k) -> Real {
        for (auto [o, c] : A.st[nrow])
            if (nrow + o == k) return c;
        return 0.0;
    };
    for (int i = 0; i < n; ++i) {
        for (int j = std::max(0, i - S.hb); j <= i; ++j) {
            MatrixXd& B = S.at(i, j);
            if (i == j) B += omega(i) * PSP[A.pidx[i]];
            const Real wij = w(i, j); // row i contains node j: P_i^T W_i (w T)
            if (wij != 0.0) B += (wij * omega(i)) * PST[A.pidx[i]];
            const Real wji = w(j, i);
            if (wji != 0.0) B += (wji * omega(j)) * PST[A.pidx[j]].transpose();
            for (int k = std::max(0, std::max(i, j) - r); k < std::min(n, std::min(i, j) + r + 1);
                 ++k) {
                const Real c = w(k, i) * w(k, j);
                if (c != 0.0) B += (c * omega(k)) * TST;
            }
        }
    }
    return S;
}

/// Low-end eigenpairs of a symmetric PSD block-banded operator by shifted
/// inverse iteration plus Rayleigh-Ritz. `K` is consumed (factorized in
/// place); `applyK` must apply the exact unshifted operator.
struct LowSpectrum {
    MatrixXd vecs;  // orthonormal Ritz vectors, columns sorted by eigenvalue
    VectorXd eigs;  // ascending Ritz values
    Real norm_est = 0;
};

template <class ApplyK>
inline LowSpectrum banded_low_spectrum(BlockBandedSym K, ApplyK&& applyK, int probes,
                                       unsigned seed = 2u, int iters = 5) {
    const int n = K.nb * K.bs;
    std::mt19937_64 rng(seed);
    std::normal_distribution<Real> gauss;
    auto randvec = [&] {
        VectorXd v(n);
        for (int i = 0; i < n; ++i) v(i) = gauss(rng);
        return v;
    };
    LowSpectrum out;
    {
        VectorXd v = randvec().normalized();
        for (int it = 0; it < 30; ++it) {
            v = applyK(v);
            out.norm_est = v.norm();
            v /= out.norm_est;
        }
    }
    K.add_shift(1e-10 * out.norm_est);
    K.factorize();
    MatrixXd X(n, probes);
    for (int c = 0; c < probes; ++c) X.col(c) = randvec();
    for (int it = 0; it < iters; ++it) {
        for (int c = 0; c < probes; ++c) X.col(c) = K.solve(X.col(c));
        Eigen::HouseholderQR<MatrixXd> qr(X);
        X = qr.householderQ() * MatrixXd::Identity(n, probes);
    }
    MatrixXd KX(n, probes);
    for (int c = 0; c < probes; ++c) KX.col(c) = applyK(X.col(c));
    const MatrixXd Rayleigh = X.transpose() * KX;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (Rayleigh + Rayleigh.transpose()));
    out.eigs = es.eigenvalues();
    out.vecs = X * es.eigenvectors();
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Chart complexes
// ---------------------------------------------------------------------------

struct ChartComplex {
    const SpatialBasis* b = nullptr;
    TimeGrid g;
    Chart chart = Chart::Glued;
    Real delta = 0;
    Real weight_coef = 0; // omega_n = qw(n) * exp(weight_coef * tau(t_n))
    ChartOp D0, D1;
    VectorXd s0, s1, s2; // node-local spatial Sobolev symbols
    VectorXd omega;      // per-node weight x quadrature

    // Diagonal Gram applications on big vectors.
    VectorXd g1_mul(const VectorXd& x) const {
        VectorXd y(x.size());
        const int nd = static_cast<int>(s1.size());
        for (int n = 0; n < g.n; ++n)
            y.segment(n * nd, nd) = omega(n) * s1.cwiseProduct(x.segment(n * nd, nd));
        return y;
    }
    VectorXd g1_div(const VectorXd& x) const {
        VectorXd y(x.size());
        const int nd = static_cast<int>(s1.size());
        for (int n = 0; n < g.n; ++n)
            y.segment(n * nd, nd) = x.segment(n * nd, nd).cwiseQuotient(s1) / omega(n);
        return y;
    }
    VectorXd g2_mul(const VectorXd& x) const {
        VectorXd y(x.size());
        const int nd = static_cast<int>(s2.size());
        for (int n = 0; n < g.n; ++n)
            y.segment(n * nd, nd) = omega(n) * s2.cwiseProduct(x.segment(n * nd, nd));
        return y;
    }
    VectorXd g2_div(const VectorXd& x) const {
        VectorXd y(x.size());
        const int nd = static_cast<int>(s2.size());
        for (int n = 0; n < g.n; ++n)
            y.segment(n * nd, nd) = x.segment(n * nd, nd).cwiseQuotient(s2) / omega(n);
        return y;
    }
};

/// Assemble the chart complex at xi with the chart's weight function. Pieces
/// and the glued chart carry the -delta weight (omega ~ e^{-delta tau}); the
/// cylinder carries +delta.
inline ChartComplex assemble_chart_complex(const Configuration& xi, Real delta,
                                           const TimeCoord& tau) {
    const SpatialBasis& b = xi.basis();
    const TimeGrid& g = xi.grid();
    const int M = b.modes();
    ChartComplex c;
    c.b = &b;
    c.g = g;
    c.chart = xi.chart();
    c.delta = delta;
    c.weight_coef = (xi.chart() == Chart::Cylinder) ? delta : -delta;

    c.s0 = packed_symbol(b, FieldKind::Function, ValueType::ImagV, sobolev_mode_weight(b, 2));
    {
        const VectorXd w2 = sobolev_mode_weight(b, 2);
        const VectorXd sa = packed_symbol(b, FieldKind::OneForm4, ValueType::ImagV, w2);
        const VectorXd sp = packed_symbol(b, FieldKind::SpinorPlus, ValueType::CplxV, w2);
        c.s1.resize(sa.size() + sp.size());
        c.s1 << sa, sp;
        const VectorXd w1 = sobolev_mode_weight(b, 1);
        const VectorXd sd = packed_symbol(b, FieldKind::SelfDual2, ValueType::ImagV, w1);
        const VectorXd sm = packed_symbol(b, FieldKind::SpinorMinus, ValueType::CplxV, w1);
        c.s2.resize(sd.size() + sm.size());
        c.s2 << sd, sm;
    }
    c.omega.resize(g.n);
    for (int n = 0; n < g.n; ++n)
        c.omega(n) = g.qw(n) * std::exp(c.weight_coef * tau(g.t(n)));

    // Stencils shared by both operators.
    std::vector<std::vector<std::pair<int, Real>>> st(g.n);
    for (int n = 0; n < g.n; ++n) st[n] = fd_stencil(n, g.n, g.dt, g.fd_order);

    // Background deduplication.
    std::vector<int> pidx(g.n);
    std::vector<int> distinct; // representative node per distinct background
    for (int n = 0; n < g.n; ++n) {
        int found = -1;
        for (std::size_t d = 0; d < distinct.size(); ++d) {
            const int m = distinct[d];
            if (xi.A.nodes[n].coef == xi.A.nodes[m].coef &&
                xi.Psi.nodes[n].coef == xi.Psi.nodes[m].coef) {
                found = static_cast<int>(d);
                break;
            }
        }
        if (found < 0) {
            found = static_cast<int>(distinct.size());
            distinct.push_back(n);
        }
        pidx[n] = found;
    }

    // D0: f -> (2 df, -f Psi); T0 carries a_t = 2 fdot.
    c.D0.g = g;
    c.D0.in_nd = M;
    c.D0.out_nd = 8 * M;
    c.D0.st = st;
    c.D0.pidx = pidx;
    for (int i = 0; i < M; ++i) c.D0.Ttrip.emplace_back(i, i, 2.0);
    for (int m : distinct) {
        MatrixXd P(8 * M, M);
        for (int i = 0; i < M; ++i) {
            VectorXd e = VectorXd::Zero(M);
            e(i) = 1.0;
            const Field3 f = Field3::unpack(b, FieldKind::Function, ValueType::ImagV, e);
            MatrixXcd an, pn;
            D0_node(b, xi.Psi.nodes[m].coef, f.coef.col(0), an, pn);
            Field3 fa(b, FieldKind::OneForm4, ValueType::ImagV);
            fa.coef = an;
            Field3 fp(b, FieldKind::SpinorPlus, ValueType::CplxV);
            fp.coef = pn;
            P.col(i).head(4 * M) = fa.pack();
            P.col(i).tail(4 * M) = fp.pack();
        }
        c.D0.P.push_back(std::move(P));
    }

    // D1; T1 carries curv_j += adot_{j+1}/sqrt(2) and dirac += psidot.
    c.D1.g = g;
    c.D1.in_nd = 8 * M;
    c.D1.out_nd = 7 * M;
    c.D1.st = st;
    c.D1.pidx = pidx;
    const Real inv_s2 = 1.0 / std::sqrt(2.0);
    for (int i = 0; i < 3 * M; ++i) c.D1.Ttrip.emplace_back(i, M + i, inv_s2);
    for (int i = 0; i < 4 * M; ++i) c.D1.Ttrip.emplace_back(3 * M + i, 4 * M + i, 1.0);
    for (int m : distinct) {
        MatrixXd P(7 * M, 8 * M);
        for (int i = 0; i < 8 * M; ++i) {
            VectorXd e = VectorXd::Zero(8 * M);
            e(i) = 1.0;
            const Field3 fa =
                Field3::unpack(b, FieldKind::OneForm4, ValueType::ImagV, e.head(4 * M));
            const Field3 fp =
                Field3::unpack(b, FieldKind::SpinorPlus, ValueType::CplxV, e.tail(4 * M));
            MatrixXcd curv, dr;
            D1_node(b, xi.A.nodes[m].coef, xi.Psi.nodes[m].coef, fa.coef, fp.coef, curv, dr);
            Field3 oc(b, FieldKind::SelfDual2, ValueType::ImagV);
            oc.coef = curv;
            Field3 od(b, FieldKind::SpinorMinus, ValueType::CplxV);
            od.coef = dr;
            P.col(i).head(3 * M) = oc.pack();
            P.col(i).tail(4 * M) = od.pack();
        }
        c.D1.P.push_back(std::move(P));
    }
    return c;
}

// ---------------------------------------------------------------------------
// Chart parametrices
// ---------------------------------------------------------------------------

struct ChartParametrices {
    ChartComplex cx;
    BlockBandedSym SRf; // D1 G1^{-1} D1^T + sigma, factored
    BlockBandedSym SLf; // D0^T G1 D0, factored
    MatrixXd V;         // G2-orthonormal cokernel basis (n2dof x h2dim)
    Real sigmaR = 0;
    Real normS = 0;       // ||D1 G1^{-1} D1^T||, power-iteration estimate
    Real kernel_tol = 0;  // eigenvalue threshold used for the rank decision
    Real d1d0_defect = 0; // ||D1 D0|| relative operator-norm estimate
    int h2dim = 0;
    int refine = 2;

    VectorXd apply_S(const VectorXd& z) const {
        return cx.D1.apply(cx.g1_div(cx.D1.applyT(z)));
    }
    VectorXd apply_Pi2(const VectorXd& z) const {
        if (V.cols() == 0) return VectorXd::Zero(z.size());
        return V * (V.transpose() * cx.g2_mul(z));
    }
    /// Refined solve against the unshifted normal operator; symmetric as a
    /// matrix, which apply_R_plainT relies on.
    VectorXd apply_M(const VectorXd& zim) const {
        VectorXd lam = SRf.solve(zim);
        for (int it = 0; it < refine; ++it) lam += SRf.solve(zim - apply_S(lam));
        return lam;
    }
    VectorXd apply_R(const VectorXd& z) const {
        return cx.g1_div(cx.D1.applyT(apply_M(z - apply_Pi2(z))));
    }
    /// Plain (unweighted) transpose of apply_R as a matrix on packed vectors;
    /// weighted adjoints are formed by conjugating with the Grams outside.
    VectorXd apply_R_plainT(const VectorXd& x) const {
        VectorXd y = apply_M(cx.D1.apply(cx.g1_div(x)));
        if (V.cols() > 0) y -= cx.g2_mul(V * (V.transpose() * y));
        return y;
    }
    VectorXd apply_L(const VectorXd& x) const {
        const VectorXd rhs = cx.D0.applyT(cx.g1_mul(x));
        VectorXd f = SLf.solve(rhs);
        f += SLf.solve(rhs - cx.D0.applyT(cx.g1_mul(cx.D0.apply(f))));
        return f;
    }
    VectorXd apply_Pi1(const VectorXd& x) const {
        return x - cx.D0.apply(apply_L(x)) - apply_R(cx.D1.apply(x));
    }
};

/// Factor the weighted normal operators of a chart complex, locate the
/// numerical cokernel of D1, and wire up the parametrices.
inline ChartParametrices build_chart_parametrices(ChartComplex cxin, int expected_h2 = 0,
                                                  unsigned seed = 1u) {
    ChartParametrices p;
    p.cx = std::move(cxin);
    const ChartComplex& cx = p.cx;
    const int n2 = cx.D1.out_dof();

    std::mt19937_64 rng(seed);
    std::normal_distribution<Real> gauss;
    auto randvec = [&](int n) {
        VectorXd v(n);
        for (int i = 0; i < n; ++i) v(i) = gauss(rng);
        return v;
    };

    // S_L = D0^T G1 D0 first; breakdown or a tiny smallest eigenvalue means
    // H^0 != 0, and a reducible background should be reported as such before
    // any statement about the cokernel.
    p.SLf = detail::normal_inner(cx.D0, cx.s1, cx.omega);
    try {
        p.SLf.factorize();
    } catch (const RankDeficient&) {
        throw RankDeficient("D0 normal operator is singular (reducible configuration)");
    }
    {
        const int n0 = cx.D0.in_dof();
        VectorXd v = randvec(n0).normalized();
        Real lo = 0, hi = 0;
        for (int it = 0; it < 30; ++it) {
            VectorXd w = cx.D0.applyT(cx.g1_mul(cx.D0.apply(v)));
            hi = w.norm();
            v = w / hi;
        }
        VectorXd u = randvec(n0).normalized();
        for (int it = 0; it < 30; ++it) {
            VectorXd w = p.SLf.solve(u);
            lo = w.norm();
            u = w / lo;
        }
        if (1.0 / lo < 1e-10 * hi)
            throw RankDeficient("D0 has a numerical kernel (H^0 != 0)");
    }

    // ||S|| by power iteration.
    {
        VectorXd v = randvec(n2).normalized();
        for (int it = 0; it < 30; ++it) {
            v = p.apply_S(v);
            p.normS = v.norm();
            v /= p.normS;
        }
    }

    // Shifted factorization of S.
    p.sigmaR = 1e-10 * p.normS;
    p.SRf = detail::normal_outer(cx.D1, cx.s1, cx.omega);
    p.SRf.add_shift(p.sigmaR);
    p.SRf.factorize();

    // Numerical cokernel of D1 by block inverse iteration + Rayleigh-Ritz.
    {
        const int pcols = std::max(3, expected_h2 + 3);
        MatrixXd X(n2, pcols);
        for (int c = 0; c < pcols; ++c) X.col(c) = randvec(n2);
        for (int it = 0; it < 5; ++it) {
            for (int c = 0; c < pcols; ++c) X.col(c) = p.SRf.solve(X.col(c));
            Eigen::HouseholderQR<MatrixXd> qr(X);
            X = qr.householderQ() * MatrixXd::Identity(n2, pcols);
        }
        MatrixXd SX(n2, pcols);
        for (int c = 0; c < pcols; ++c) SX.col(c) = p.apply_S(X.col(c));
        const MatrixXd Rayleigh = X.transpose() * SX;
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (Rayleigh + Rayleigh.transpose()));
        p.kernel_tol = 1e-10 * p.normS;
        std::vector<int> kernel_cols;
        for (int c = 0; c < pcols; ++c)
            if (es.eigenvalues()(c) < p.kernel_tol) kernel_cols.push_back(c);
        p.h2dim = static_cast<int>(kernel_cols.size());
        if (p.h2dim > 0 &&
            (cx.chart == Chart::PlusPiece || cx.chart == Chart::MinusPiece))
            throw ObstructionOnPiece("piece chart has numerical H^2 of dimension " +
                                     std::to_string(p.h2dim));
        MatrixXd Vr(n2, p.h2dim);
        for (int c = 0; c < p.h2dim; ++c)
            Vr.col(c) = X * es.eigenvectors().col(kernel_cols[c]);
        // coker basis in the weighted sense: V = G2^{-1} Ker(D1^T), then
        // G2-orthonormalized
        for (int c = 0; c < p.h2dim; ++c) Vr.col(c) = cx.g2_div(Vr.col(c));
        if (p.h2dim > 0) {
            MatrixXd gram(p.h2dim, p.h2dim);
            for (int a = 0; a < p.h2dim; ++a)
                for (int bcol = 0; bcol < p.h2dim; ++bcol)
                    gram(a, bcol) = Vr.col(a).dot(cx.g2_mul(Vr.col(bcol)));
            Eigen::LLT<MatrixXd> llt(gram);
            const MatrixXd Lg = llt.matrixL();
            Vr = Lg.transpose()
                     .triangularView<Eigen::Upper>()
                     .solve(Vr.transpose())
                     .transpose();
        }
        p.V = std::move(Vr);
    }

    // Record the D1 D0 defect (operator-norm estimate of the composition).
    {
        const int n0 = cx.D0.in_dof();
        VectorXd v = randvec(n0).normalized();
        Real nrm = 0;
        for (int it = 0; it < 20; ++it) {
            VectorXd w = cx.D1.apply(cx.D0.apply(v));
            w = cx.D0.applyT(cx.D1.applyT(w));
            nrm = std::sqrt(w.norm());
            v = w / w.norm();
        }
        p.d1d0_defect = nrm;
    }
    return p;
}

} // namespace swglue
