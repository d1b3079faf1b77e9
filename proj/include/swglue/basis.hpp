#pragma once

// Band-limited Fourier discretization of the flat 3-torus.
//
// Scalar fields are expansions f = sum_k c_k E_k over the integer lattice
// k in [-N, N]^3, with E_k = exp(2 pi i (k1 x1/s1 + k2 x2/s2 + k3 x3/s3)) / sqrt(V)
// orthonormal in L^2(T^3).  Products of band-limited fields are computed by
// exact coefficient convolution truncated back to the band, which coincides
// with de-aliased (2x zero-padded) pseudo-spectral evaluation for quadratic
// nonlinearities.
//
// Real-valued scalars carry the Hermitian symmetry c_{-k} = conj(c_k) and are
// packed into M real degrees of freedom (an isometry onto the real
// trigonometric basis); complex-valued scalars use 2M real dof (Re/Im
// interleaved per mode).

#include "common.hpp"

#include <array>

namespace swglue {

/// Flat 3-torus with side lengths and a spectral cutoff N (max |k_j|).
struct TorusSpec {
    std::array<Real, 3> sides{1.0, 1.0, 1.0};
    int N = 1;

    void validate() const {
        if (N < 1) throw InvalidParams("TorusSpec: N must be >= 1");
        for (Real s : sides)
            if (!(s > 0)) throw InvalidParams("TorusSpec: sides must be positive");
    }
    Real volume() const { return sides[0] * sides[1] * sides[2]; }
};

/// Mode bookkeeping for one TorusSpec.
class SpatialBasis {
public:
    explicit SpatialBasis(const TorusSpec& spec) : spec_(spec) {
        spec.validate();
        const int N = spec.N;
        W_ = 2 * N + 1;
        M_ = W_ * W_ * W_;
        kvec_.resize(M_);
        neg_.resize(M_);
        for (int m = 0; m < M_; ++m) {
            kvec_[m] = {m / (W_ * W_) - N, (m / W_) % W_ - N, m % W_ - N};
            neg_[m] = index(-kvec_[m][0], -kvec_[m][1], -kvec_[m][2]);
        }
        // Half-lattice enumeration for real-valued scalars: k = 0 first, then
        // lexicographically positive modes.
        half_.clear();
        for (int m = 0; m < M_; ++m) {
            const auto& k = kvec_[m];
            if (k[0] > 0 || (k[0] == 0 && (k[1] > 0 || (k[1] == 0 && k[2] > 0))))
                half_.push_back(m);
        }
        dfac_.resize(M_);
        for (int m = 0; m < M_; ++m)
            for (int j = 0; j < 3; ++j)
                dfac_[m][j] = Complex(0, 2.0 * M_PI * kvec_[m][j] / spec_.sides[j]);
    }

    const TorusSpec& spec() const { return spec_; }
    int modes() const { return M_; }

    int index(int k1, int k2, int k3) const {
        const int N = spec_.N;
        if (std::abs(k1) > N || std::abs(k2) > N || std::abs(k3) > N) return -1;
        return (k1 + N) * W_ * W_ + (k2 + N) * W_ + (k3 + N);
    }
    const std::array<int, 3>& kvec(int m) const { return kvec_[m]; }
    int neg(int m) const { return neg_[m]; }

    /// Coefficient multiplier for d/dx_j of mode m.
    Complex dfactor(int m, int j) const { return dfac_[m][j]; }

    /// Zero-mode index (the constant function 1/sqrt(V)).
    int zero_mode() const { return index(0, 0, 0); }

    /// Exact truncated convolution: coefficients of the pointwise product f*g.
    VectorXcd conv(const VectorXcd& f, const VectorXcd& g) const {
        VectorXcd out = VectorXcd::Zero(M_);
        const Real invsv = 1.0 / std::sqrt(spec_.volume());
        for (int a = 0; a < M_; ++a) {
            if (f[a] == Complex(0, 0)) continue;
            const auto& ka = kvec_[a];
            for (int b = 0; b < M_; ++b) {
                const int m = index(ka[0] + kvec_[b][0], ka[1] + kvec_[b][1],
                                    ka[2] + kvec_[b][2]);
                if (m >= 0) out[m] += f[a] * g[b] * invsv;
            }
        }
        return out;
    }

    /// Complex conjugate of a scalar field, in coefficient space.
    VectorXcd conj_field(const VectorXcd& f) const {
        VectorXcd out(M_);
        for (int m = 0; m < M_; ++m) out[m] = std::conj(f[neg_[m]]);
        return out;
    }

    /// Spatial derivative d/dx_j in coefficient space.
    VectorXcd deriv(const VectorXcd& f, int j) const {
        VectorXcd out(M_);
        for (int m = 0; m < M_; ++m) out[m] = dfac_[m][j] * f[m];
        return out;
    }

    // -- real-dof packing ---------------------------------------------------

    /// Real dof count of a real-valued scalar (equals modes()).
    int real_dof() const { return M_; }

    /// Pack a Hermitian-symmetric coefficient vector into M real dof.
    VectorXd pack_real(const VectorXcd& c) const {
        VectorXd out(M_);
        int p = 0;
        out[p++] = c[zero_mode()].real();
        const Real s2 = std::sqrt(2.0);
        for (int m : half_) {
            out[p++] = s2 * c[m].real();
            out[p++] = -s2 * c[m].imag();
        }
        return out;
    }

    /// Inverse of pack_real.
    VectorXcd unpack_real(const VectorXd& d) const {
        VectorXcd c = VectorXcd::Zero(M_);
        int p = 0;
        c[zero_mode()] = d[p++];
        const Real inv_s2 = 1.0 / std::sqrt(2.0);
        for (int m : half_) {
            const Real pr = d[p++], qi = d[p++];
            c[m] = Complex(pr, -qi) * inv_s2;
            c[neg_[m]] = Complex(pr, qi) * inv_s2;
        }
        return c;
    }

    /// Pack an unconstrained complex coefficient vector into 2M real dof.
    VectorXd pack_complex(const VectorXcd& c) const {
        VectorXd out(2 * M_);
        for (int m = 0; m < M_; ++m) {
            out[2 * m] = c[m].real();
            out[2 * m + 1] = c[m].imag();
        }
        return out;
    }

    VectorXcd unpack_complex(const VectorXd& d) const {
        VectorXcd c(M_);
        for (int m = 0; m < M_; ++m) c[m] = Complex(d[2 * m], d[2 * m + 1]);
        return c;
    }

private:
    TorusSpec spec_;
    int W_ = 0, M_ = 0;
    std::vector<std::array<int, 3>> kvec_;
    std::vector<int> neg_;
    std::vector<int> half_;
    std::vector<std::array<Complex, 3>> dfac_;
};

} // namespace swglue
