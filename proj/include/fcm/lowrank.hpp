#pragma once

// Blocked randomly pivoted Cholesky over a lazily evaluated PSD matrix.
// Ten blocks of r/10 proposals each are drawn from the residual diagonal,
// deduplicated, and eliminated; the result is a landmark index set S and a
// factor F with K ~= F F^T.

#include "fcm/common.hpp"
#include "fcm/parallel.hpp"
#include "fcm/random.hpp"

#include <algorithm>
#include <limits>
#include <span>
#include <vector>

namespace fcm {

// Lazy symmetric PSD matrix: size, diagonal, and batched column lookup.
// Implied diagonal entries are clamped to zero where rounding makes them
// negative.
class MatrixOracle {
public:
    virtual ~MatrixOracle() = default;
    virtual Index size() const = 0;
    virtual Vector diagonal() const = 0;
    virtual Matrix columns(std::span<const Index> indices) const = 0;
};

class DenseOracle final : public MatrixOracle {
public:
    explicit DenseOracle(Matrix k) : k_(std::move(k)) {
        if (k_.rows() != k_.cols()) throw InvalidArgumentError("DenseOracle: square matrix required");
    }

    Index size() const override { return k_.rows(); }
    Vector diagonal() const override { return k_.diagonal(); }
    Matrix columns(std::span<const Index> indices) const override {
        Matrix out(k_.rows(), static_cast<Index>(indices.size()));
        for (std::size_t j = 0; j < indices.size(); ++j) out.col(static_cast<Index>(j)) = k_.col(indices[j]);
        return out;
    }

    const Matrix& matrix() const { return k_; }

private:
    Matrix k_;
};

struct LowRankFactor {
    std::vector<Index> landmarks;      // selection order, distinct
    Matrix factor;                     // N x |landmarks|
    std::vector<Index> block_offsets;  // columns completed after each executed block
    Vector residual_diag;              // final residual diagonal; exactly zero at landmarks
};

// If raw_columns is non-null it receives the unmodified kernel columns
// K(:, S) in landmark order, saving the caller a second oracle pass.
inline LowRankFactor rpcholesky(const MatrixOracle& oracle, Index rank, Rng& rng,
                                Matrix* raw_columns = nullptr) {
    if (rank < 10 || rank % 10 != 0)
        throw InvalidArgumentError("rpcholesky: rank must be a positive multiple of 10");
    const Index n = oracle.size();
    constexpr double eps_mach = std::numeric_limits<double>::epsilon();

    Vector d = oracle.diagonal().cwiseMax(0.0);
    const double trace0 = d.sum();
    if (!(trace0 > 0.0)) throw DegenerateMatrixError("rpcholesky: matrix trace is zero");

    const Index proposals_per_block = rank / 10;
    Matrix f(n, rank);
    if (raw_columns) raw_columns->resize(n, rank);

    LowRankFactor out;
    out.landmarks.reserve(static_cast<std::size_t>(rank));
    std::vector<char> selected(static_cast<std::size_t>(n), 0);
    Index cols = 0;

    for (Index block = 0; block < 10; ++block) {
        // Residual reduced to floating-point residue: the matrix is already
        // reproduced, stop rather than eliminate noise pivots.
        const double remaining = d.sum();
        if (remaining <= static_cast<double>(n) * eps_mach * trace0) break;

        CategoricalCdf cdf(d);
        std::vector<Index> proposal(static_cast<std::size_t>(proposals_per_block));
        for (auto& p : proposal) p = cdf.sample(rng);
        std::sort(proposal.begin(), proposal.end());
        proposal.erase(std::unique(proposal.begin(), proposal.end()), proposal.end());
        std::erase_if(proposal, [&](Index i) { return selected[static_cast<std::size_t>(i)] != 0; });
        if (proposal.empty()) {
            out.block_offsets.push_back(cols);
            continue;
        }
        const Index b = static_cast<Index>(proposal.size());

        Matrix g = oracle.columns(proposal);
        if (raw_columns) raw_columns->middleCols(cols, b) = g;

        if (cols > 0) {
            Matrix f_rows(b, cols);
            for (Index j = 0; j < b; ++j) f_rows.row(j) = f.row(proposal[static_cast<std::size_t>(j)]).head(cols);
            g.noalias() -= f.leftCols(cols) * f_rows.transpose();
        }

        // Jitter the square pivot block G(S',:) before factorizing.
        Matrix pivot(b, b);
        for (Index j = 0; j < b; ++j) pivot.row(j) = g.row(proposal[static_cast<std::size_t>(j)]);
        const double jitter = eps_mach * pivot.trace();
        pivot.diagonal().array() += jitter;
        for (Index j = 0; j < b; ++j) g.row(proposal[static_cast<std::size_t>(j)]) = pivot.row(j);

        Eigen::LLT<Matrix> llt(pivot);
        if (llt.info() != Eigen::Success)
            throw NumericalBreakdownError("rpcholesky: pivot block Cholesky failed after jitter", block);

        // F(:, new) = G R^{-1} with R the upper-triangular factor.
        llt.matrixU().solveInPlace<Eigen::OnTheRight>(g);
        f.middleCols(cols, b) = g;

        d -= g.rowwise().squaredNorm();
        d = d.cwiseMax(0.0);
        for (Index j = 0; j < b; ++j) {
            const Index idx = proposal[static_cast<std::size_t>(j)];
            d[idx] = 0.0;
            selected[static_cast<std::size_t>(idx)] = 1;
            out.landmarks.push_back(idx);
        }
        cols += b;
        out.block_offsets.push_back(cols);
    }

    out.factor = f.leftCols(cols);
    if (raw_columns) raw_columns->conservativeResize(n, cols);
    out.residual_diag = std::move(d);
    return out;
}

// Residual trace sum_n max(0, K_nn - ||F(n,:)||^2), recomputed from the
// oracle. The prefix_cols argument restricts F to its leading columns so the
// per-block history can be inspected.
inline double residual_trace(const MatrixOracle& oracle, const LowRankFactor& factor,
                             Index prefix_cols = -1) {
    const Index cols = prefix_cols < 0 ? factor.factor.cols() : prefix_cols;
    if (cols > factor.factor.cols()) throw InvalidArgumentError("residual_trace: prefix exceeds factor width");
    const Vector diag = oracle.diagonal().cwiseMax(0.0);
    return chunked_reduce<double>(
        oracle.size(), 0.0,
        [&](double& acc, Index i) {
            acc += std::max(0.0, diag[i] - factor.factor.row(i).head(cols).squaredNorm());
        },
        [](double& total, const double& p) { total += p; });
}

}  // namespace fcm
