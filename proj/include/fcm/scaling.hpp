#pragma once

// The learned scaling matrix: a symmetric PSD matrix with a cached square
// root, plus the trace-of-covariance normalization applied between fit
// iterations.

#include "fcm/common.hpp"

#include <cmath>

namespace fcm {

namespace detail {

// Eigenvalues in [-1e-12*trace, 0) are rounding residue of a PSD-by-
// construction matrix and clamp to zero; anything below is a real error.
inline constexpr double kPsdBand = 1e-12;

inline Matrix psd_sqrt_of_symmetric(const Matrix& sym, const char* what) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    if (eig.info() != Eigen::Success) throw NumericalError(std::string(what) + ": eigendecomposition failed");
    Vector lambda = eig.eigenvalues();
    const double floor = -kPsdBand * sym.trace();
    for (Index i = 0; i < lambda.size(); ++i) {
        if (lambda[i] < floor)
            throw InvalidArgumentError(std::string(what) + ": matrix is not positive semidefinite (eigenvalue " +
                                       std::to_string(lambda[i]) + ")");
        if (lambda[i] < 0.0) lambda[i] = 0.0;
    }
    const Matrix root = eig.eigenvectors() * lambda.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
    return (root + root.transpose()) / 2.0;
}

}  // namespace detail

class ScalingMatrix {
public:
    explicit ScalingMatrix(const Matrix& entries) {
        if (entries.rows() != entries.cols() || entries.rows() < 1)
            throw InvalidArgumentError("ScalingMatrix: square matrix required");
        entries_ = (entries + entries.transpose()) / 2.0;
        sqrt_entries_ = detail::psd_sqrt_of_symmetric(entries_, "ScalingMatrix");
    }

    static ScalingMatrix identity(Index dim) { return ScalingMatrix(Matrix::Identity(dim, dim)); }

    Index dim() const { return entries_.rows(); }
    const Matrix& entries() const { return entries_; }
    const Matrix& sqrt_entries() const { return sqrt_entries_; }

    // M -> factor*M without re-factorizing; the root scales by sqrt(factor).
    ScalingMatrix scaled_by(double factor) const {
        if (!(factor > 0.0) || !std::isfinite(factor))
            throw InvalidArgumentError("ScalingMatrix::scaled_by: factor must be positive and finite");
        ScalingMatrix out(*this);
        out.entries_ *= factor;
        out.sqrt_entries_ *= std::sqrt(factor);
        return out;
    }

private:
    Matrix entries_;
    Matrix sqrt_entries_;
};

// Symmetric PSD square root of a matrix that is symmetric up to tolerance.
inline Matrix matrix_sqrt(const Matrix& m) {
    if (m.rows() != m.cols()) throw InvalidArgumentError("matrix_sqrt: square matrix required");
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * scale)
        throw InvalidArgumentError("matrix_sqrt: matrix is not symmetric (max asymmetry " + std::to_string(asym) + ")");
    return detail::psd_sqrt_of_symmetric((m + m.transpose()) / 2.0, "matrix_sqrt");
}

// Sample covariance (1/(N-1) convention) of row-stacked points.
inline Matrix sample_covariance(const Matrix& points) {
    const Index n = points.rows();
    if (n < 2) throw InvalidArgumentError("sample_covariance: at least two points required");
    const Eigen::RowVectorXd mean = points.colwise().mean();
    const Matrix centered = points.rowwise() - mean;
    return centered.transpose() * centered / static_cast<double>(n - 1);
}

// Trace of the sample covariance of the transformed points {M^{1/2} x_n}.
// tr(M^{1/2} C M^{1/2}) = sum_ij M_ij C_ij, which equals the pairwise form
// (1/(2N(N-1))) sum_{m,n} ||M^{1/2}(x_m - x_n)||^2 exactly.
inline double transformed_trace_covariance(const ScalingMatrix& m, const Matrix& cov) {
    return m.entries().cwiseProduct(cov).sum();
}

inline ScalingMatrix rescale_by_trace(const ScalingMatrix& m, const Matrix& cov) {
    const double t = transformed_trace_covariance(m, cov);
    if (!(t > 1e-300))
        throw DegenerateDataError("trace_cov_rescale: transformed points have zero covariance trace");
    return m.scaled_by(1.0 / t);
}

inline ScalingMatrix trace_cov_rescale(const ScalingMatrix& m, const Matrix& points) {
    if (points.cols() != m.dim())
        throw InvalidArgumentError("trace_cov_rescale: point dimension does not match scaling matrix");
    return rescale_by_trace(m, sample_covariance(points));
}

}  // namespace fcm
