#pragma once

// Shared scalar aliases, error types, quadrature and fitting helpers used
// across the library.

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace swglue {

using Real = double;
using Complex = std::complex<double>;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::MatrixXcd;
using Eigen::VectorXcd;

inline constexpr const char* kVersionString = "swglue 0.1.0";

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Base for all structured failures; carries the pipeline stage that raised it.
class SwError : public std::runtime_error {
public:
    SwError(std::string stage, const std::string& msg)
        : std::runtime_error(stage + ": " + msg), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }
private:
    std::string stage_;
};

/// D^0 has a kernel: the configuration is reducible (H^0 != 0).
struct RankDeficient : SwError {
    explicit RankDeficient(const std::string& m) : SwError("RankDeficient", m) {}
};
/// A piece complex unexpectedly has H^2 != 0 (regularity hypothesis fails).
struct ObstructionOnPiece : SwError {
    explicit ObstructionOnPiece(const std::string& m) : SwError("ObstructionOnPiece", m) {}
};
/// The two pieces do not converge to the same limit on the boundary slice.
struct LimitMismatch : SwError {
    explicit LimitMismatch(const std::string& m) : SwError("LimitMismatch", m) {}
};
/// Im and Ker of the approximate projection fail to span (L0 too small).
struct SplitFailure : SwError {
    explicit SplitFailure(const std::string& m) : SwError("SplitFailure", m) {}
};
/// The limit map r is rank deficient (main-theorem hypothesis fails).
struct TransversalityFailure : SwError {
    explicit TransversalityFailure(const std::string& m) : SwError("TransversalityFailure", m) {}
};
/// A Neumann-series precondition ||T|| < 1/2 failed.
struct NeumannDivergence : SwError {
    explicit NeumannDivergence(const std::string& m) : SwError("NeumannDivergence", m) {}
};
/// Newton iteration stalled before reaching tolerance.
struct NewtonStall : SwError {
    explicit NewtonStall(const std::string& m) : SwError("NewtonStall", m) {}
};
/// The limiting critical point has |Phi| below the irreducibility threshold.
struct ReducibleLimit : SwError {
    explicit ReducibleLimit(const std::string& m) : SwError("ReducibleLimit", m) {}
};
/// Gradient-flow integration blew up.
struct FlowDivergence : SwError {
    explicit FlowDivergence(const std::string& m) : SwError("FlowDivergence", m) {}
};
/// An iteration finished without reaching its target tolerance.
struct NonConvergence : SwError {
    explicit NonConvergence(const std::string& m) : SwError("NonConvergence", m) {}
};
/// Picard iteration did not contract (measured ratio too large).
struct ContractionFailure : SwError {
    explicit ContractionFailure(const std::string& m) : SwError("ContractionFailure", m) {}
};
/// Generic parameter-validation failure (e.g. l <= 4 L0).
struct InvalidParams : SwError {
    explicit InvalidParams(const std::string& m) : SwError("InvalidParams", m) {}
};

// ---------------------------------------------------------------------------
// Quadrature and fitting
// ---------------------------------------------------------------------------

/// Composite Simpson quadrature of f over [a, b] with n subintervals
/// (n rounded up to even).
inline Real simpson(const std::function<Real(Real)>& f, Real a, Real b, int n = 2048) {
    if (n % 2) ++n;
    const Real h = (b - a) / n;
    Real s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

/// Least-squares straight line y = slope*x + intercept; residual is the RMS
/// misfit of the fit.
struct LineFit {
    Real slope = 0.0;
    Real intercept = 0.0;
    Real residual = 0.0;
};

inline LineFit fit_line(const std::vector<Real>& x, const std::vector<Real>& y) {
    const int n = static_cast<int>(x.size());
    LineFit out;
    if (n < 2) {
        out.intercept = n == 1 ? y[0] : 0.0;
        return out;
    }
    Real sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const Real det = n * sxx - sx * sx;
    out.slope = (n * sxy - sx * sy) / det;
    out.intercept = (sy * sxx - sx * sxy) / det;
    Real r2 = 0;
    for (int i = 0; i < n; ++i) {
        const Real e = y[i] - (out.slope * x[i] + out.intercept);
        r2 += e * e;
    }
    out.residual = std::sqrt(r2 / n);
    return out;
}

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

/// FNV-1a 64-bit over a byte string; used for config hashes in reports.
inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace swglue
