#pragma once

// The fast committor machine: weighted difference-kernel system, landmark
// selection by randomly pivoted Cholesky, the restricted regularized
// least-squares solve, the gradient-outer-product scaling update, and the
// five-iteration training loop, plus empirical loss and grid search.

#include "fcm/common.hpp"
#include "fcm/dataset.hpp"
#include "fcm/kernel.hpp"
#include "fcm/lowrank.hpp"
#include "fcm/model.hpp"
#include "fcm/parallel.hpp"
#include "fcm/random.hpp"
#include "fcm/scaling.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace fcm {

// b_n = sqrt(w_n) [1_B(y_n) - 1_B(x_n)]
inline Vector assemble_b(const TrajectoryDataset& data) {
    Vector b(data.count);
    for (Index i = 0; i < data.count; ++i) {
        const double in_b_y = data.y_region[static_cast<std::size_t>(i)] == Region::B ? 1.0 : 0.0;
        const double in_b_x = data.x_region[static_cast<std::size_t>(i)] == Region::B ? 1.0 : 0.0;
        b[i] = std::sqrt(data.w[i]) * (in_b_y - in_b_x);
    }
    return b;
}

// k_mn = sqrt(w_m w_n) [k(x_m,x_n) - k(x_m,y_n) - k(y_m,x_n) + k(y_m,y_n)]
inline double kernel_entry(Index m, Index n, const TrajectoryDataset& data, const KernelSpec& spec) {
    if (m < 0 || m >= data.count || n < 0 || n >= data.count)
        throw InvalidArgumentError("kernel_entry: index out of range");
    const auto xm = data.x.row(m).transpose();
    const auto ym = data.y.row(m).transpose();
    const auto xn = data.x.row(n).transpose();
    const auto yn = data.y.row(n).transpose();
    const Region xmr = data.x_region[static_cast<std::size_t>(m)];
    const Region ymr = data.y_region[static_cast<std::size_t>(m)];
    const Region xnr = data.x_region[static_cast<std::size_t>(n)];
    const Region ynr = data.y_region[static_cast<std::size_t>(n)];
    return std::sqrt(data.w[m] * data.w[n]) *
           (kernel_eval(xm, xmr, xn, xnr, spec) - kernel_eval(xm, xmr, yn, ynr, spec) -
            kernel_eval(ym, ymr, xn, xnr, spec) + kernel_eval(ym, ymr, yn, ynr, spec));
}

// Lazily evaluated weighted difference-kernel matrix; the columns and
// diagonal are vectorized forms of kernel_entry over precomputed transformed
// coordinates. Distances come from the squared-norm expansion, so column
// blocks reduce to matrix products plus elementwise exponentials; the
// self-entry of each requested column is recomputed in closed form where the
// expansion would cancel.
class PairKernelOracle final : public MatrixOracle {
public:
    PairKernelOracle(const TrajectoryDataset& data, const KernelSpec& spec)
        : n_(data.count),
          inv_eps_(1.0 / spec.bandwidth),
          tx_(spec.scaling.sqrt_entries() * data.x.transpose()),
          ty_(spec.scaling.sqrt_entries() * data.y.transpose()),
          sq_x_(tx_.colwise().squaredNorm().transpose()),
          sq_y_(ty_.colwise().squaredNorm().transpose()),
          sw_(data.w.cwiseSqrt()),
          mask_x_(n_),
          mask_y_(n_) {
        if (data.dim != spec.scaling.dim())
            throw InvalidArgumentError("PairKernelOracle: dataset dimension does not match kernel spec");
        for (Index i = 0; i < n_; ++i) {
            mask_x_[i] = data.x_region[static_cast<std::size_t>(i)] == Region::Omega ? 1.0 : 0.0;
            mask_y_[i] = data.y_region[static_cast<std::size_t>(i)] == Region::Omega ? 1.0 : 0.0;
        }
    }

    Index size() const override { return n_; }

    Vector diagonal() const override {
        Vector d(n_);
        for (Index i = 0; i < n_; ++i) d[i] = diag_entry(i);
        return d;
    }

    Matrix columns(std::span<const Index> indices) const override {
        const Index b = static_cast<Index>(indices.size());
        Matrix cx(tx_.rows(), b), cy(tx_.rows(), b);
        Vector scx(b), scy(b), mxs(b), mys(b), sws(b);
        for (Index j = 0; j < b; ++j) {
            const Index s = indices[static_cast<std::size_t>(j)];
            cx.col(j) = tx_.col(s);
            cy.col(j) = ty_.col(s);
            scx[j] = sq_x_[s];
            scy[j] = sq_y_[s];
            mxs[j] = mask_x_[s];
            mys[j] = mask_y_[s];
            sws[j] = sw_[s];
        }

        Matrix out = Matrix::Zero(n_, b);
        Matrix work(n_, b);
        auto accumulate = [&](const Matrix& points, const Vector& sq_points, const Vector& mask_rows,
                              const Matrix& centers, const Vector& sq_centers, const Vector& mask_cols,
                              double sign) {
            if (mask_cols.maxCoeff() == 0.0) return;
            work.noalias() = points.transpose() * centers;
            work *= -2.0;
            work.colwise() += sq_points;
            work.rowwise() += sq_centers.transpose();
            work = (work.array().max(0.0).sqrt() * (-inv_eps_)).exp().matrix();
            work.array().colwise() *= mask_rows.array();
            work.array().rowwise() *= mask_cols.transpose().array();
            out += sign * work;
        };
        accumulate(tx_, sq_x_, mask_x_, cx, scx, mxs, 1.0);
        accumulate(tx_, sq_x_, mask_x_, cy, scy, mys, -1.0);
        accumulate(ty_, sq_y_, mask_y_, cx, scx, mxs, -1.0);
        accumulate(ty_, sq_y_, mask_y_, cy, scy, mys, 1.0);
        out.array().colwise() *= sw_.array();
        out.array().rowwise() *= sws.transpose().array();
        for (Index j = 0; j < b; ++j) {
            const Index s = indices[static_cast<std::size_t>(j)];
            out(s, j) = diag_entry(s);
        }
        return out;
    }

private:
    double diag_entry(Index i) const {
        const bool ox = mask_x_[i] != 0.0;
        const bool oy = mask_y_[i] != 0.0;
        double v = (ox ? 1.0 : 0.0) + (oy ? 1.0 : 0.0);
        if (ox && oy) v -= 2.0 * std::exp(-(tx_.col(i) - ty_.col(i)).norm() * inv_eps_);
        return sw_[i] * sw_[i] * v;
    }

    Index n_;
    double inv_eps_;
    Matrix tx_, ty_;  // d x N transformed start/end points
    Vector sq_x_, sq_y_;
    Vector sw_;
    Vector mask_x_, mask_y_;
};

// Solves [K(:,S)^T K(:,S) + gamma N K(S,S)] eta = K(:,S)^T b after adding
// the eps_mach * tr(K_SS) jitter to the K_SS diagonal.
inline Vector solve_restricted(const Matrix& k_cols, Matrix k_ss, const Vector& b, double gamma,
                               Index n_total) {
    if (!(gamma > 0.0)) throw InvalidArgumentError("solve_restricted: gamma must be positive");
    const Index s = k_ss.rows();
    if (k_ss.cols() != s || k_cols.cols() != s || k_cols.rows() != b.size())
        throw InvalidArgumentError("solve_restricted: inconsistent shapes");
    k_ss = (k_ss + k_ss.transpose()) / 2.0;
    k_ss.diagonal().array() += std::numeric_limits<double>::epsilon() * k_ss.trace();

    Matrix system = Matrix::Zero(s, s);
    system.selfadjointView<Eigen::Lower>().rankUpdate(k_cols.transpose());
    system.triangularView<Eigen::StrictlyUpper>() = system.transpose();
    system += gamma * static_cast<double>(n_total) * k_ss;

    Eigen::LDLT<Matrix> ldlt(system);
    const double min_pivot = s > 0 ? ldlt.vectorD().minCoeff() : 0.0;
    if (ldlt.info() != Eigen::Success || !(min_pivot > 0.0))
        throw IllConditionedError("solve_restricted: factorization failed", min_pivot);
    return ldlt.solve(k_cols.transpose() * b);
}

// M <- (1/N) sum_n grad q(x_n) grad q(x_n)^T. The 1/N factor only changes
// scale and is erased by the trace-covariance rescale.
inline ScalingMatrix update_scaling(const FcmModel& model, const TrajectoryDataset& data) {
    if (data.dim != model.dim())
        throw InvalidArgumentError("update_scaling: dataset dimension does not match model");
    const BatchEvaluator evaluator(model);
    const Matrix grads = evaluator.gradients(data.x, data.x_region);
    if (grads.cwiseAbs().maxCoeff() == 0.0)
        throw DegenerateUpdateError("update_scaling: all model gradients vanish");
    Matrix sum = Matrix::Zero(data.dim, data.dim);
    sum.selfadjointView<Eigen::Lower>().rankUpdate(grads.transpose());
    sum.triangularView<Eigen::StrictlyUpper>() = sum.transpose();
    return ScalingMatrix(sum / static_cast<double>(data.count));
}

// Weighted mean squared increment (1/N) sum w_n |q(x_n) - q(y_n)|^2 for any
// committor evaluator q(point, region).
template <class Evaluator>
    requires std::invocable<Evaluator&, const Vector&, Region>
double empirical_loss(Evaluator&& q, const TrajectoryDataset& data) {
    const double total = chunked_reduce<double>(
        data.count, 0.0,
        [&](double& acc, Index i) {
            const double qx = q(data.x.row(i).transpose(), data.x_region[static_cast<std::size_t>(i)]);
            const double qy = q(data.y.row(i).transpose(), data.y_region[static_cast<std::size_t>(i)]);
            const double diff = qx - qy;
            acc += data.w[i] * diff * diff;
        },
        [](double& t, const double& p) { t += p; });
    return total / static_cast<double>(data.count);
}

inline double empirical_loss(const FcmModel& model, const TrajectoryDataset& data) {
    const BatchEvaluator evaluator(model);
    const Vector qx = evaluator.values(data.x, data.x_region);
    const Vector qy = evaluator.values(data.y, data.y_region);
    double total = 0.0;
    for (Index i = 0; i < data.count; ++i) {
        const double diff = qx[i] - qy[i];
        total += data.w[i] * diff * diff;
    }
    return total / static_cast<double>(data.count);
}

struct FitOptions {
    double bandwidth = 1.0;
    double regularization = 1e-6;
    Index rank = 1000;
    std::uint64_t seed = 0;
};

struct IterationRecord {
    double validation_loss = 0.0;
    Vector trace_fraction;  // per-coordinate fraction M_ii / tr(M) of the updated scaling
    double residual_trace = 0.0;
    double seconds = 0.0;
    Matrix updated_scaling;  // scaling produced at the end of the iteration
};

struct FitReport {
    std::vector<IterationRecord> iterations;
};

struct FitResult {
    FcmModel model;
    FitReport report;
};

namespace detail {

inline FcmModel build_model(const TrajectoryDataset& data, const KernelSpec& spec,
                            const std::vector<Index>& landmarks, Vector eta) {
    const Index s = static_cast<Index>(landmarks.size());
    Matrix lx(s, data.dim), ly(s, data.dim);
    Vector lw(s);
    std::vector<Region> lxr(static_cast<std::size_t>(s)), lyr(static_cast<std::size_t>(s));
    for (Index i = 0; i < s; ++i) {
        const Index idx = landmarks[static_cast<std::size_t>(i)];
        lx.row(i) = data.x.row(idx);
        ly.row(i) = data.y.row(idx);
        lw[i] = data.w[idx];
        lxr[static_cast<std::size_t>(i)] = data.x_region[static_cast<std::size_t>(idx)];
        lyr[static_cast<std::size_t>(i)] = data.y_region[static_cast<std::size_t>(idx)];
    }
    return FcmModel(spec, landmarks, std::move(eta), std::move(lx), std::move(ly), std::move(lw),
                    std::move(lxr), std::move(lyr));
}

}  // namespace detail

// Algorithm: five iterations of rescale-M, select landmarks on the weighted
// difference kernel, solve the restricted system, rebuild the committor, and
// reset M to the average gradient outer product. Per-iteration losses are
// recorded on `validation` when given, else on the training data.
inline FitResult fit(const TrajectoryDataset& train, const FitOptions& options,
                     const TrajectoryDataset* validation = nullptr) {
    if (!(options.regularization > 0.0))
        throw InvalidArgumentError("fit: regularization must be positive");
    if (options.rank < 10 || options.rank % 10 != 0)
        throw InvalidArgumentError("fit: rank must be a positive multiple of 10");

    const Vector b = assemble_b(train);
    const Matrix cov = sample_covariance(train.x);
    ScalingMatrix scaling = ScalingMatrix::identity(train.dim);

    FitReport report;
    std::optional<FcmModel> model;
    for (Index iter = 1; iter <= 5; ++iter) {
        const auto started = std::chrono::steady_clock::now();
        IterationRecord record;

        scaling = rescale_by_trace(scaling, cov);
        const KernelSpec spec(options.bandwidth, scaling);
        const PairKernelOracle oracle(train, spec);

        Rng rng(derive_seed(options.seed, 0xfc, static_cast<std::uint64_t>(iter)));
        Matrix raw_cols;
        LowRankFactor factor = rpcholesky(oracle, options.rank, rng, &raw_cols);
        record.residual_trace = factor.residual_diag.sum();
        factor.factor.resize(0, 0);

        const Index s = static_cast<Index>(factor.landmarks.size());
        Matrix k_ss(s, s);
        for (Index i = 0; i < s; ++i) k_ss.row(i) = raw_cols.row(factor.landmarks[static_cast<std::size_t>(i)]);
        Vector eta = solve_restricted(raw_cols, std::move(k_ss), b, options.regularization, train.count);
        raw_cols.resize(0, 0);

        model.emplace(detail::build_model(train, spec, factor.landmarks, std::move(eta)));
        record.validation_loss = empirical_loss(*model, validation ? *validation : train);

        ScalingMatrix updated = [&]() {
            try {
                return update_scaling(*model, train);
            } catch (const DegenerateUpdateError&) {
                return scaling;  // keep the previous feature map
            }
        }();
        record.updated_scaling = updated.entries();
        const double trace = record.updated_scaling.trace();
        record.trace_fraction = trace > 0.0 ? Vector(record.updated_scaling.diagonal() / trace)
                                            : Vector(Vector::Zero(train.dim));
        record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        report.iterations.push_back(std::move(record));
        scaling = std::move(updated);
    }
    return FitResult{std::move(*model), std::move(report)};
}

struct GridSearchCell {
    double bandwidth;
    double regularization;
    Index rank;
    double validation_loss;
    bool failed;
};

struct GridSearchResult {
    double bandwidth;
    double regularization;
    Index rank;
    double validation_loss;
    std::vector<GridSearchCell> table;
};

// 80/20 deterministic split, one fit per grid cell, best cell by validation
// loss with ties broken toward larger gamma then smaller rank.
inline GridSearchResult grid_search(const TrajectoryDataset& data, std::span<const double> bandwidths,
                                    std::span<const double> regularizations, std::span<const Index> ranks,
                                    std::uint64_t seed) {
    if (bandwidths.empty() || regularizations.empty() || ranks.empty())
        throw InvalidArgumentError("grid_search: empty grid");
    Rng split_rng(derive_seed(seed, 0x59, 0));
    const auto [train, val] = split_train_validation(data, 0.2, split_rng);
    const std::uint64_t fit_seed = derive_seed(seed, 0x11, 1);

    GridSearchResult result{0.0, 0.0, 0, std::numeric_limits<double>::infinity(), {}};
    bool have_best = false;
    for (const double eps : bandwidths) {
        for (const double gamma : regularizations) {
            for (const Index rank : ranks) {
                GridSearchCell cell{eps, gamma, rank, std::numeric_limits<double>::infinity(), false};
                try {
                    const FitResult fitres = fit(train, FitOptions{eps, gamma, rank, fit_seed}, &val);
                    cell.validation_loss = fitres.report.iterations.back().validation_loss;
                } catch (const Error&) {
                    cell.failed = true;
                }
                const bool better =
                    !have_best || cell.validation_loss < result.validation_loss ||
                    (cell.validation_loss == result.validation_loss &&
                     (cell.regularization > result.regularization ||
                      (cell.regularization == result.regularization && cell.rank < result.rank)));
                if (!cell.failed && better) {
                    result.bandwidth = cell.bandwidth;
                    result.regularization = cell.regularization;
                    result.rank = cell.rank;
                    result.validation_loss = cell.validation_loss;
                    have_best = true;
                }
                result.table.push_back(cell);
            }
        }
    }
    if (!have_best) throw NumericalError("grid_search: every grid cell failed");
    return result;
}

}  // namespace fcm
