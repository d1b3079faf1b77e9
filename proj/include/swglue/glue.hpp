#pragma once

// Splicing engine: approximate gluing of configurations, the spliced
// parametrix R~ and almost-projection Pi~2, the corrected projection Pi^2
// with its right inverse F, the identification iota of the Y-level harmonic
// space with Im Pi^2, the limit maps r / rho, the quasi-isometry j, and the
// right inverses R1 (finite-codimension track), R2 (finite-dimension track)
// and the full R with D1 R = I.
//
// All charts share the single global time grid, so packed field vectors move
// freely between the piece, cylinder, and glued complexes; only the weight
// functions differ. Operator norms are estimated by power iteration (30
// iterations) using exact adjoints with respect to the chart Grams.

#include "hodge.hpp"

namespace swglue {

// ---------------------------------------------------------------------------
// Approximate gluing
// ---------------------------------------------------------------------------

/// lambda xi+ + (1 - lambda) xi-, node by node. Both inputs live on the
/// global grid; they must agree across the middle (common limit) within
/// 1e-3 in slice L^2 or the blend is meaningless.
inline Configuration approx_glue(const Configuration& xp, const Configuration& xm,
                                 const GluingParams& params, const CutoffSet& cs) {
    const TimeGrid& g = xp.grid();
    if (!g.same(xm.grid()) || !g.same(cs.grid))
        throw InvalidParams("approx_glue: inputs live on different grids");
    Real mismatch = 0;
    for (int n = 0; n < g.n; ++n) {
        if (std::abs(g.t(n)) > 1.0) continue;
        const Real d = std::hypot((xp.A.nodes[n].coef - xm.A.nodes[n].coef).norm(),
                                  (xp.Psi.nodes[n].coef - xm.Psi.nodes[n].coef).norm());
        mismatch = std::max(mismatch, d);
    }
    if (mismatch > 1e-3)
        throw LimitMismatch("approx_glue: middle slices differ by " +
                            std::to_string(mismatch));
    (void)params;
    Configuration out(xp.basis(), Chart::Glued, g);
    for (int n = 0; n < g.n; ++n) {
        const Real l = cs.lambda_s(n);
        out.A.nodes[n].coef = l * xp.A.nodes[n].coef + (1.0 - l) * xm.A.nodes[n].coef;
        out.Psi.nodes[n].coef = l * xp.Psi.nodes[n].coef + (1.0 - l) * xm.Psi.nodes[n].coef;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Model projections on the glued E^2
// ---------------------------------------------------------------------------

/// Pi~2 = mu_o Pi2_o(mu_o .), its corrected true projection Pi^2 (same image
/// and kernel), and the explicit right inverse F of Pi~2 on its image. All
/// three have rank dim H^1(E(Y)) and are stored through the model columns
///   U_i = mu_o e^{-delta tau_o} (dt ^. h_i),
///   G_i = c^2 qw mu_o (dt ^. h_i)          (the pairing functionals),
/// so that Pi~2 = U G^T and Pi^2 = U (G^T U)^{-1} G^T.
struct ModelProjector {
    int nd = 0; // per-node packed dof of E^2
    MatrixXd U, G;
    MatrixXd Minv;       // (G^T U)^{-1}
    VectorXd Fdiag;      // per-node scalar of F = (beta/c^2) e^{delta tau_o}
    Real split_sv_ratio = 0;

    int dim() const { return static_cast<int>(U.cols()); }
    VectorXd apply_t(const VectorXd& z) const {
        if (dim() == 0) return VectorXd::Zero(z.size());
        return U * (G.transpose() * z);
    }
    VectorXd apply(const VectorXd& z) const {
        if (dim() == 0) return VectorXd::Zero(z.size());
        return U * (Minv * (G.transpose() * z));
    }
    VectorXd coords(const VectorXd& z) const { return Minv * (G.transpose() * z); }
    VectorXd apply_t_plainT(const VectorXd& z) const {
        if (dim() == 0) return VectorXd::Zero(z.size());
        return G * (U.transpose() * z);
    }
    VectorXd apply_plainT(const VectorXd& z) const {
        if (dim() == 0) return VectorXd::Zero(z.size());
        return G * (Minv.transpose() * (U.transpose() * z));
    }
    VectorXd apply_F(const VectorXd& z) const {
        VectorXd out(z.size());
        const int n = static_cast<int>(z.size()) / nd;
        for (int i = 0; i < n; ++i) out.segment(i * nd, nd) = Fdiag(i) * z.segment(i * nd, nd);
        return out;
    }
};

inline ModelProjector make_model_projector(const TimeGrid& g, const TimeCoord& tau_o,
                                           const CutoffSet& cs, const HarmonicBasis& hY) {
    ModelProjector mp;
    mp.nd = static_cast<int>(hY.vecs.rows());
    const int d = hY.dim;
    const Real inv_s2 = 1.0 / std::sqrt(2.0);
    mp.U.resize(static_cast<std::ptrdiff_t>(g.n) * mp.nd, d);
    mp.G.resize(mp.U.rows(), d);
    mp.Fdiag.resize(g.n);
    for (int n = 0; n < g.n; ++n) {
        const Real e = std::exp(-cs.delta * tau_o(g.t(n)));
        const Real mu = cs.mu_o_s(n);
        for (int i = 0; i < d; ++i) {
            mp.U.block(n * mp.nd, i, mp.nd, 1) = (mu * e * inv_s2) * hY.vecs.col(i);
            mp.G.block(n * mp.nd, i, mp.nd, 1) =
                (cs.c * cs.c * g.qw(n) * mu * inv_s2) * hY.vecs.col(i);
        }
        mp.Fdiag(n) = cs.beta_s(n) / (cs.c * cs.c) / e;
    }
    if (d > 0) {
        const MatrixXd M = mp.G.transpose() * mp.U;
        Eigen::JacobiSVD<MatrixXd> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const VectorXd& sv = svd.singularValues();
        mp.split_sv_ratio = sv(d - 1) / sv(0);
        if (!(mp.split_sv_ratio > 1e-8))
            throw SplitFailure("image/kernel split of the model projection is degenerate "
                               "(L0 too small): sv ratio " +
                               std::to_string(mp.split_sv_ratio));
        mp.Minv = svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
    } else {
        mp.Minv.resize(0, 0);
    }
    return mp;
}

// ---------------------------------------------------------------------------
// iota, limit maps, j
// ---------------------------------------------------------------------------

/// iota(h) = c mu_o e^{-delta (tau_o - l/2)} (dt ^. h), column per Y-harmonic
/// basis vector, as packed E^2(X_l) vectors.
inline MatrixXd make_iota(const TimeGrid& g, const TimeCoord& tau_o, const CutoffSet& cs,
                          const HarmonicBasis& hY, Real ell) {
    const int nd = static_cast<int>(hY.vecs.rows());
    const Real inv_s2 = 1.0 / std::sqrt(2.0);
    MatrixXd out(static_cast<std::ptrdiff_t>(g.n) * nd, hY.dim);
    for (int n = 0; n < g.n; ++n) {
        const Real amp =
            cs.c * cs.mu_o_s(n) * std::exp(-cs.delta * (tau_o(g.t(n)) - 0.5 * ell)) * inv_s2;
        for (int i = 0; i < hY.dim; ++i)
            out.block(n * nd, i, nd, 1) = amp * hY.vecs.col(i);
    }
    return out;
}

/// Y-limit coordinates of packed E^1 chart vectors: time-slice average over
/// the middle band |t| <= L0 of the spatial (a, phi) part, paired with the
/// Y-harmonic basis.
inline MatrixXd limit_coords(const TimeGrid& g, const CutoffSet& cs, const HarmonicBasis& hY,
                             const MatrixXd& cols) {
    const int M = static_cast<int>(hY.vecs.rows()) / 7;
    const int nd = 8 * M;
    MatrixXd out = MatrixXd::Zero(hY.dim, cols.cols());
    Real wsum = 0;
    for (int n = 0; n < g.n; ++n) {
        if (std::abs(g.t(n)) > cs.L0) continue;
        wsum += g.qw(n);
        for (int j = 0; j < cols.cols(); ++j) {
            const VectorXd slice = cols.block(n * nd + M, j, 7 * M, 1);
            out.col(j) += g.qw(n) * (hY.vecs.transpose() * slice);
        }
    }
    return out / wsum;
}

struct LimitMaps {
    MatrixXd r;   // dim H^1(Y) x (hp + hm)
    MatrixXd rho; // minimal-norm right inverse
    VectorXd svals;
};

/// r(xi+, xi-) = r+(xi+) - r-(xi-) on the given piece-harmonic bases;
/// rho = r^+ (Moore-Penrose). Throws when r is not onto.
inline LimitMaps limit_maps(const TimeGrid& g, const CutoffSet& cs, const HarmonicBasis& hY,
                            const MatrixXd& basis_plus, const MatrixXd& basis_minus) {
    LimitMaps lm;
    const MatrixXd rp = limit_coords(g, cs, hY, basis_plus);
    const MatrixXd rm = limit_coords(g, cs, hY, basis_minus);
    lm.r.resize(hY.dim, rp.cols() + rm.cols());
    lm.r << rp, -rm;
    Eigen::JacobiSVD<MatrixXd> svd(lm.r, Eigen::ComputeThinU | Eigen::ComputeThinV);
    lm.svals = svd.singularValues();
    if (hY.dim > 0 &&
        (lm.svals.size() < hY.dim || lm.svals(hY.dim - 1) < 1e-8 * (1.0 + lm.svals(0))))
        throw TransversalityFailure("limit map r is rank deficient (fiber product not "
                                    "smooth at this pair)");
    lm.rho = svd.matrixV().leftCols(hY.dim) *
             lm.svals.head(hY.dim).cwiseInverse().asDiagonal() *
             svd.matrixU().transpose();
    return lm;
}

/// Multiply a packed chart vector by a sampled time profile, node by node.
inline VectorXd mul_profile(const VectorXd& x, const VectorXd& samples, int nd) {
    VectorXd out(x.size());
    const int n = static_cast<int>(samples.size());
    for (int i = 0; i < n; ++i) out.segment(i * nd, nd) = samples(i) * x.segment(i * nd, nd);
    return out;
}

/// j(xi+, xi-) = nu+ xi+ + nu- xi- on packed E^1 vectors.
inline VectorXd jmap(const VectorXd& xi_plus, const VectorXd& xi_minus, const CutoffSet& cs,
                     int nd) {
    return mul_profile(xi_plus, cs.nu_plus_s, nd) + mul_profile(xi_minus, cs.nu_minus_s, nd);
}

// ---------------------------------------------------------------------------
// Piece-harmonic bases
// ---------------------------------------------------------------------------

/// Static (time-constant, temporal-gauge) extension of a Y-tangent to a
/// packed chart E^1 vector.
inline VectorXd extend_Y_tangent(const TimeGrid& g, const HarmonicBasis& hY, int col) {
    const int M = static_cast<int>(hY.vecs.rows()) / 7;
    const int nd = 8 * M;
    VectorXd out = VectorXd::Zero(static_cast<std::ptrdiff_t>(g.n) * nd);
    for (int n = 0; n < g.n; ++n) out.segment(n * nd + M, 7 * M) = hY.vecs.col(col);
    return out;
}

/// Harmonic representatives on a regular piece with prescribed Y-limits.
/// For each Y-harmonic h, the static extension is corrected through the
/// piece parametrix: xi = ext(h) - R(D1 ext(h)). On a regular piece D1 xi = 0
/// exactly, and the minimal-norm correction dies off away from the region
/// where the background deviates from the pullback of eta, so the limit of
/// xi over the matching band stays h. Columns are normalized in the piece's
/// exponentially weighted L^2.
inline MatrixXd piece_harmonic_basis(const ChartParametrices& p, const HarmonicBasis& hY) {
    const ChartComplex& cx = p.cx;
    const int nd = static_cast<int>(cx.s1.size());
    MatrixXd out(cx.D1.in_dof(), hY.dim);
    for (int i = 0; i < hY.dim; ++i) {
        const VectorXd ext = extend_Y_tangent(cx.g, hY, i);
        VectorXd xi = ext - p.apply_R(cx.D1.apply(ext));
        Real n2 = 0;
        for (int n = 0; n < cx.g.n; ++n)
            n2 += cx.omega(n) * xi.segment(n * nd, nd).squaredNorm();
        out.col(i) = xi / std::sqrt(n2);
    }
    return out;
}

// ---------------------------------------------------------------------------
// The spliced operators
// ---------------------------------------------------------------------------

struct SplicedOperators {
    const ChartParametrices* plus = nullptr;
    const ChartParametrices* minus = nullptr;
    const ChartParametrices* cyl = nullptr;
    ChartComplex glued; // at xi~_l with the tau_l weight
    GluingParams params;
    CutoffSet cs;
    HarmonicBasis hY;
    ModelProjector mp;
    MatrixXd iota_cols;
    Real c_ell = 0;
    Real iota_scale = 1; // iota = iota_scale * U columnwise

    /// Coordinates of z in the iota basis of Im Pi^2.
    VectorXd iota_coords(const VectorXd& z) const { return mp.coords(z) / iota_scale; }

    int n1 = 0, n2 = 0, nd1 = 0, nd2 = 0;
    int neumann_max = 80;
    Real neumann_tol = 1e-13;

    // finite-dimensional track
    bool finite_ready = false;
    MatrixXd basis_plus, basis_minus; // piece-harmonic representatives, packed E^1
    LimitMaps lm;
    MatrixXd jcols; // j applied to the combined basis
    MatrixXd M2, J2;

    // -- elementary operators -------------------------------------------------

    VectorXd apply_D1(const VectorXd& x) const { return glued.D1.apply(x); }
    VectorXd apply_D0(const VectorXd& x) const { return glued.D0.apply(x); }

    VectorXd apply_Rt(const VectorXd& z) const {
        VectorXd out = mul_profile(plus->apply_R(mul_profile(z, cs.mu_plus_s, nd2)),
                                   cs.mu_plus_s, nd1);
        out += mul_profile(cyl->apply_R(mul_profile(z, cs.mu_o_s, nd2)), cs.mu_o_s, nd1);
        out += mul_profile(minus->apply_R(mul_profile(z, cs.mu_minus_s, nd2)),
                           cs.mu_minus_s, nd1);
        return out;
    }
    VectorXd apply_Rt_plainT(const VectorXd& x) const {
        VectorXd out = mul_profile(
            plus->apply_R_plainT(mul_profile(x, cs.mu_plus_s, nd1)), cs.mu_plus_s, nd2);
        out += mul_profile(cyl->apply_R_plainT(mul_profile(x, cs.mu_o_s, nd1)), cs.mu_o_s,
                           nd2);
        out += mul_profile(minus->apply_R_plainT(mul_profile(x, cs.mu_minus_s, nd1)),
                           cs.mu_minus_s, nd2);
        return out;
    }

    VectorXd apply_Pi2t(const VectorXd& z) const { return mp.apply_t(z); }
    VectorXd apply_Pi2(const VectorXd& z) const { return mp.apply(z); }
    VectorXd apply_F(const VectorXd& z) const { return mp.apply_F(z); }

    // -- R1 on Ker Pi^2 -------------------------------------------------------

    /// A = (I - Pi^2) D1 R~ restricted to Ker Pi^2.
    VectorXd apply_A1(const VectorXd& z) const {
        const VectorXd y = apply_D1(apply_Rt(z));
        return y - mp.apply(y);
    }
    VectorXd apply_A1_plainT(const VectorXd& x) const {
        VectorXd y = x - mp.apply_plainT(x);
        return apply_Rt_plainT(glued.D1.applyT(y));
    }

    /// J1 z0 = sum_k (I - A)^k z0 by Neumann iteration; measured contraction
    /// ratio is written to *ratio when given. The iterated operator is far
    /// from normal, so individual term norms may grow for a while before the
    /// spectral decay takes over; divergence is therefore declared only on
    /// genuine runaway (a term far above the input) or on sustained growth
    /// that still tops the input scale when the iteration budget runs out.
    template <class Op>
    VectorXd neumann_sum(const VectorXd& z0, Op&& residual_step, Real* ratio = nullptr) const {
        VectorXd e = z0, acc = z0;
        Real prev = e.norm();
        const Real scale = prev;
        const Real target = neumann_tol * (prev + 1e-300);
        Real worst = 0;
        Real nrm = prev;
        for (int k = 0; k < neumann_max; ++k) {
            e = residual_step(e);
            nrm = e.norm();
            if (prev > 0) worst = std::max(worst, nrm / prev);
            if (nrm > 1e3 * scale)
                throw NeumannDivergence("Neumann series is not contracting (ratio " +
                                        std::to_string(nrm / prev) + "); L0 too small");
            acc += e;
            if (nrm < target) break;
            prev = nrm;
        }
        if (nrm > scale)
            throw NeumannDivergence("Neumann series failed to decay below the input "
                                    "after " + std::to_string(neumann_max) +
                                    " terms; L0 too small");
        if (ratio) *ratio = worst;
        return acc;
    }

    VectorXd apply_R1(const VectorXd& z, Real* ratio = nullptr) const {
        const VectorXd z0 = z - mp.apply(z);
        const VectorXd j1 = neumann_sum(z0, [this](const VectorXd& e) {
            VectorXd r = e - apply_A1(e);
            return VectorXd(r - mp.apply(r));
        }, ratio);
        return apply_Rt(j1);
    }
    VectorXd apply_R1_plainT(const VectorXd& x) const {
        // R1 = R~ (sum_k B^k) (I - Pi^2) with B = (I - Pi^2) - A1, so the
        // transposed Neumann step is B^T e = (I - Pi^2)^T e - A1^T e.
        const VectorXd w = apply_Rt_plainT(x);
        const VectorXd j1t = neumann_sum(w, [this](const VectorXd& e) {
            return VectorXd(e - mp.apply_plainT(e) - apply_A1_plainT(e));
        });
        return j1t - mp.apply_plainT(j1t);
    }
    VectorXd apply_N1(const VectorXd& z) const { return mp.apply(apply_D1(apply_R1(z))); }
    VectorXd apply_N1_plainT(const VectorXd& x) const {
        return apply_R1_plainT(glued.D1.applyT(mp.apply_plainT(x)));
    }

    // -- R2 on Im Pi^2 ---------------------------------------------------------

    void set_finite_track(const MatrixXd& bp, const MatrixXd& bm) {
        if (hY.dim == 0 && bp.cols() == 0 && bm.cols() == 0) {
            // Unobstructed limit: the finite track is empty and R2 = 0.
            jcols.resize(n1, 0);
            J2.resize(0, 0);
            finite_ready = true;
            return;
        }
        basis_plus = bp;
        basis_minus = bm;
        lm = limit_maps(glued.g, cs, hY, bp, bm);
        jcols.resize(n1, bp.cols() + bm.cols());
        for (int j = 0; j < bp.cols(); ++j)
            jcols.col(j) = mul_profile(bp.col(j), cs.nu_plus_s, nd1);
        for (int j = 0; j < bm.cols(); ++j)
            jcols.col(bp.cols() + j) = mul_profile(bm.col(j), cs.nu_minus_s, nd1);
        // M2 = matrix of Pi^2 D1 R~2 on Im(iota) in iota coordinates.
        const int d = hY.dim;
        M2.resize(d, d);
        for (int j = 0; j < d; ++j) {
            const VectorXd w = (1.0 / c_ell) * (jcols * lm.rho.col(j));
            M2.col(j) = iota_coords(apply_D1(w));
        }
        if (d > 0) {
            // The sign of c_l is a pure orientation convention of the finite
            // track; flip it when the measured matrix comes out negated.
            Real defect = (M2 - MatrixXd::Identity(d, d)).norm();
            const Real flipped = (M2 + MatrixXd::Identity(d, d)).norm();
            if (defect > 0.5 && flipped < defect) {
                c_ell = -c_ell;
                M2 = -M2;
                defect = flipped;
            }
            if (defect > 0.5)
                throw NeumannDivergence("finite track: ||Pi2 D1 R~2 - I|| = " +
                                        std::to_string(defect) + " > 1/2");
            J2 = M2.inverse();
        } else {
            J2.resize(0, 0);
        }
        finite_ready = true;
    }

    VectorXd apply_R2(const VectorXd& z) const {
        if (!finite_ready || hY.dim == 0) return VectorXd::Zero(n1);
        return (1.0 / c_ell) * (jcols * (lm.rho * (J2 * iota_coords(z))));
    }
    VectorXd apply_R2_plainT(const VectorXd& x) const {
        if (!finite_ready || hY.dim == 0) return VectorXd::Zero(n2);
        const VectorXd k =
            (1.0 / (c_ell * iota_scale)) * (lm.rho.transpose() * (jcols.transpose() * x));
        return mp.G * (mp.Minv.transpose() * (J2.transpose() * k));
    }
    VectorXd apply_N2(const VectorXd& z) const {
        const VectorXd y = apply_D1(apply_R2(z));
        return y - mp.apply(y);
    }
    VectorXd apply_N2_plainT(const VectorXd& x) const {
        return apply_R2_plainT(glued.D1.applyT(x - mp.apply_plainT(x)));
    }

    // -- full R ----------------------------------------------------------------

    VectorXd apply_R0(const VectorXd& z) const { return apply_R1(z) + apply_R2(z); }
    VectorXd apply_R0_plainT(const VectorXd& x) const {
        return apply_R1_plainT(x) + apply_R2_plainT(x);
    }

    /// J = (I + N1 + N2)^{-1} = (I - N1 - N2)(I - N1 N2 - N2 N1)^{-1}, the
    /// second factor by Neumann series (valid when 2 ||N1|| ||N2|| < 1).
    VectorXd apply_J(const VectorXd& z) const {
        const VectorXd y = neumann_sum(z, [this](const VectorXd& e) {
            return VectorXd(apply_N1(apply_N2(e)) + apply_N2(apply_N1(e)));
        });
        return y - apply_N1(y) - apply_N2(y);
    }
    VectorXd apply_J_plainT(const VectorXd& x) const {
        const VectorXd w = x - apply_N1_plainT(x) - apply_N2_plainT(x);
        return neumann_sum(w, [this](const VectorXd& e) {
            return VectorXd(apply_N2_plainT(apply_N1_plainT(e)) +
                            apply_N1_plainT(apply_N2_plainT(e)));
        });
    }
    VectorXd apply_R(const VectorXd& z) const { return apply_R0(apply_J(z)); }
    VectorXd apply_R_plainT(const VectorXd& x) const {
        return apply_J_plainT(apply_R0_plainT(x));
    }

    // -- norms -----------------------------------------------------------------

    /// ||A|| with respect to the glued Grams, by 30 rounds of power iteration
    /// on the metric normal operator.
    template <class F, class FT>
    Real op_norm(F&& fwd, FT&& plainT, bool in_is_E2, bool out_is_E2, int n_in,
                 unsigned seed = 23u, int iters = 30) const {
        auto gin_mul = [&](const VectorXd& v) { return in_is_E2 ? glued.g2_mul(v) : glued.g1_mul(v); };
        auto gin_div = [&](const VectorXd& v) { return in_is_E2 ? glued.g2_div(v) : glued.g1_div(v); };
        auto gout_mul = [&](const VectorXd& v) { return out_is_E2 ? glued.g2_mul(v) : glued.g1_mul(v); };
        std::mt19937_64 rng(seed);
        std::normal_distribution<Real> gauss;
        VectorXd v(n_in);
        for (int i = 0; i < n_in; ++i) v(i) = gauss(rng);
        v.normalize();
        Real lam = 0;
        for (int it = 0; it < iters; ++it) {
            const VectorXd kv = gin_div(plainT(gout_mul(fwd(v))));
            lam = std::sqrt(v.dot(gin_mul(kv)) / v.dot(gin_mul(v)));
            const Real nrm = kv.norm();
            if (nrm == 0) return 0;
            v = kv / nrm;
        }
        return lam;
    }

    Real norm_first_estimate(unsigned seed = 31u) const {
        return op_norm(
            [this](const VectorXd& z) {
                return VectorXd(apply_D1(apply_Rt(z)) - z + apply_Pi2t(z));
            },
            [this](const VectorXd& z) {
                return VectorXd(apply_Rt_plainT(glued.D1.applyT(z)) - z +
                                mp.apply_t_plainT(z));
            },
            true, true, n2, seed);
    }
    Real norm_pi2t_idem_defect(unsigned seed = 37u) const {
        return op_norm(
            [this](const VectorXd& z) { return VectorXd(apply_Pi2t(z) - apply_Pi2t(apply_Pi2t(z))); },
            [this](const VectorXd& z) {
                return VectorXd(mp.apply_t_plainT(z) - mp.apply_t_plainT(mp.apply_t_plainT(z)));
            },
            true, true, n2, seed);
    }
    Real norm_pi2_diff(unsigned seed = 41u) const {
        return op_norm(
            [this](const VectorXd& z) { return VectorXd(apply_Pi2(z) - apply_Pi2t(z)); },
            [this](const VectorXd& z) {
                return VectorXd(mp.apply_plainT(z) - mp.apply_t_plainT(z));
            },
            true, true, n2, seed);
    }
    Real norm_N1(unsigned seed = 43u) const {
        return op_norm([this](const VectorXd& z) { return apply_N1(z); },
                       [this](const VectorXd& z) { return apply_N1_plainT(z); }, true, true,
                       n2, seed, 12);
    }
    Real norm_N2(unsigned seed = 47u) const {
        return op_norm([this](const VectorXd& z) { return apply_N2(z); },
                       [this](const VectorXd& z) { return apply_N2_plainT(z); }, true, true,
                       n2, seed, 12);
    }
    Real norm_R2(unsigned seed = 53u) const {
        return op_norm([this](const VectorXd& z) { return apply_R2(z); },
                       [this](const VectorXd& z) { return apply_R2_plainT(z); }, true, false,
                       n2, seed, 12);
    }
    Real norm_R(unsigned seed = 59u) const {
        return op_norm([this](const VectorXd& z) { return apply_R(z); },
                       [this](const VectorXd& z) { return apply_R_plainT(z); }, true, false,
                       n2, seed, 10);
    }
    Real norm_R1_minus_Rt(unsigned seed = 61u) const {
        return op_norm(
            [this](const VectorXd& z) { return VectorXd(apply_R1(z) - apply_Rt(z)); },
            [this](const VectorXd& z) {
                return VectorXd(apply_R1_plainT(z) - apply_Rt_plainT(z));
            },
            true, false, n2, seed, 12);
    }

    /// max over probes of (||z|| + ||z0||) / ||zeta|| for the decomposition
    /// zeta = Pi^2 zeta + (I - Pi^2) zeta, in the glued E^2 Gram norm.
    Real K3_ratio(int nprobe = 20, unsigned seed = 67u) const {
        std::mt19937_64 rng(seed);
        std::normal_distribution<Real> gauss;
        auto nrm = [this](const VectorXd& v) { return std::sqrt(v.dot(glued.g2_mul(v))); };
        Real worst = 0;
        for (int p = 0; p < nprobe; ++p) {
            VectorXd z(n2);
            for (int i = 0; i < n2; ++i) z(i) = gauss(rng);
            const VectorXd zi = apply_Pi2(z);
            worst = std::max(worst, (nrm(zi) + nrm(z - zi)) / nrm(z));
        }
        return worst;
    }

    /// Extremal singular values of iota: H^1(Y) (L^2) -> E^2 with the plain
    /// exponential-weighted quadrature norm of the glued chart.
    std::pair<Real, Real> iota_norm_range() const {
        if (hY.dim == 0) return {0, 0};
        MatrixXd W = iota_cols;
        for (int j = 0; j < W.cols(); ++j)
            W.col(j) = mul_profile(iota_cols.col(j), glued.omega, nd2);
        const MatrixXd gram = iota_cols.transpose() * W;
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram);
        return {std::sqrt(es.eigenvalues()(0)), std::sqrt(es.eigenvalues()(hY.dim - 1))};
    }

    /// Extremal singular values of j on the combined piece-harmonic basis
    /// (inputs orthonormal in the piece metrics, image measured in the glued
    /// exponential-weighted quadrature norm).
    std::pair<Real, Real> j_norm_range() const {
        if (!finite_ready || jcols.cols() == 0) return {0, 0};
        MatrixXd W = jcols;
        for (int j = 0; j < W.cols(); ++j)
            W.col(j) = mul_profile(jcols.col(j), glued.omega, nd1);
        const MatrixXd gram = jcols.transpose() * W;
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram);
        return {std::sqrt(es.eigenvalues()(0)),
                std::sqrt(es.eigenvalues()(gram.rows() - 1))};
    }

    /// || D1 j - c_l iota r || over the finite basis, same metric as above.
    Real almost_comm_defect() const {
        if (!finite_ready || jcols.cols() == 0) return 0;
        MatrixXd D(n2, jcols.cols());
        for (int j = 0; j < jcols.cols(); ++j)
            D.col(j) = apply_D1(jcols.col(j)) - c_ell * (iota_cols * lm.r.col(j));
        MatrixXd W = D;
        for (int j = 0; j < W.cols(); ++j) W.col(j) = mul_profile(D.col(j), glued.omega, nd2);
        const MatrixXd gram = D.transpose() * W;
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram);
        return std::sqrt(std::max(0.0, es.eigenvalues()(gram.rows() - 1)));
    }
};

/// Assemble the spliced operators at an approximately-glued configuration.
/// The three parametrices must outlive the result.
inline SplicedOperators splice_R_Pi2(const ChartParametrices& plus,
                                     const ChartParametrices& minus,
                                     const ChartParametrices& cyl,
                                     const Configuration& xi_tilde, const GluingParams& params,
                                     const TimeCoords& tc, const CutoffSet& cs,
                                     const HarmonicBasis& hY) {
    if (plus.cx.chart != Chart::PlusPiece || minus.cx.chart != Chart::MinusPiece ||
        cyl.cx.chart != Chart::Cylinder)
        throw InvalidParams("splice_R_Pi2: parametrices passed with wrong charts");
    if (!plus.cx.g.same(xi_tilde.grid()) || !minus.cx.g.same(xi_tilde.grid()) ||
        !cyl.cx.g.same(xi_tilde.grid()))
        throw InvalidParams("splice_R_Pi2: chart grids disagree");
    SplicedOperators so;
    so.plus = &plus;
    so.minus = &minus;
    so.cyl = &cyl;
    so.params = params;
    so.cs = cs;
    so.hY = hY;
    so.glued = assemble_chart_complex(xi_tilde, params.delta, tc.tau_ell);
    so.nd1 = static_cast<int>(so.glued.s1.size());
    so.nd2 = static_cast<int>(so.glued.s2.size());
    so.n1 = so.glued.D1.in_dof();
    so.n2 = so.glued.D1.out_dof();
    so.mp = make_model_projector(so.glued.g, tc.tau_o, cs, hY);
    so.iota_cols = make_iota(so.glued.g, tc.tau_o, cs, hY, params.ell);
    so.c_ell = -(1.0 / (cs.c * cs.nu)) * std::exp(-0.5 * params.delta * params.ell);
    so.iota_scale = cs.c * std::exp(0.5 * params.delta * params.ell);
    return so;
}

/// Exact discrete commutator [D1, mu] x as carried by the time stencil; this
/// is the discrete realization of d mu ^. x.
inline VectorXd dmu_wedge(const ChartComplex& cx, const VectorXd& mu_samples,
                          const VectorXd& x) {
    const VectorXd a = cx.D1.apply(mul_profile(x, mu_samples, static_cast<int>(cx.s1.size())));
    const VectorXd b =
        mul_profile(cx.D1.apply(x), mu_samples, static_cast<int>(cx.s2.size()));
    return a - b;
}

} // namespace swglue
