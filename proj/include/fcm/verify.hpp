#pragma once

// Numerical verification of the structural results behind the committor
// parametrization: the full two-block coefficient system has a minimizer
// with c + d = 0, and whitening by the average gradient outer product makes
// sample gradients isotropic.

#include "fcm/common.hpp"
#include "fcm/dataset.hpp"
#include "fcm/fit.hpp"
#include "fcm/kernel.hpp"

#include <cmath>

namespace fcm {

// Dense 2N x 2N block kernel system at verification scale (N <= 100).
struct FullSystemInstance {
    TrajectoryDataset data;
    KernelSpec spec;
    Matrix k;  // [[K11, K12], [K21, K22]] with weighted kernel blocks
    Vector b;
    double gamma;
};

inline FullSystemInstance make_full_system(TrajectoryDataset data, KernelSpec spec, double gamma) {
    if (data.count > 100)
        throw InvalidArgumentError("make_full_system: verification instances are limited to N <= 100");
    if (!(gamma > 0.0)) throw InvalidArgumentError("make_full_system: gamma must be positive");
    const Index n = data.count;
    Matrix k(2 * n, 2 * n);
    auto point = [&](Index i) { return i < n ? data.x.row(i).transpose() : data.y.row(i - n).transpose(); };
    auto region = [&](Index i) {
        return i < n ? data.x_region[static_cast<std::size_t>(i)] : data.y_region[static_cast<std::size_t>(i - n)];
    };
    auto weight = [&](Index i) { return std::sqrt(data.w[i % n]); };
    for (Index i = 0; i < 2 * n; ++i)
        for (Index j = 0; j < 2 * n; ++j)
            k(i, j) = weight(i) * weight(j) * kernel_eval(point(i), region(i), point(j), region(j), spec);
    Vector b = assemble_b(data);
    return FullSystemInstance{std::move(data), std::move(spec), std::move(k), std::move(b), gamma};
}

struct FullSolveResult {
    Vector c;
    Vector d;
};

// Solves [ J J^T K + gamma N I ] [c; d] = J b with J = [I; -I].
inline FullSolveResult solve_full_system(const FullSystemInstance& instance) {
    const Index n = instance.data.count;
    const Matrix& k = instance.k;
    Matrix system(2 * n, 2 * n);
    system.topRows(n) = k.topRows(n) - k.bottomRows(n);
    system.bottomRows(n) = -system.topRows(n);
    system.diagonal().array() += instance.gamma * static_cast<double>(n);

    Vector rhs(2 * n);
    rhs.head(n) = instance.b;
    rhs.tail(n) = -instance.b;

    Eigen::PartialPivLU<Matrix> lu(system);
    Vector z = lu.solve(rhs);
    z += lu.solve(rhs - system * z);  // one refinement step
    if (!z.allFinite() || (rhs - system * z).cwiseAbs().maxCoeff() >
                              1e-8 * (rhs.cwiseAbs().maxCoeff() + 1.0))
        throw IllConditionedError("solve_full_system: factorization failed", lu.rcond());
    return FullSolveResult{z.head(n), z.tail(n)};
}

// L_gamma(c, d) = (1/N) || J^T K [c; d] - b ||^2 + gamma [c; d]^T K [c; d]
inline double full_system_objective(const FullSystemInstance& instance, const Vector& c, const Vector& d) {
    const Index n = instance.data.count;
    Vector z(2 * n);
    z.head(n) = c;
    z.tail(n) = d;
    const Vector kz = instance.k * z;
    const Vector fitted = kz.head(n) - kz.tail(n);
    return (fitted - instance.b).squaredNorm() / static_cast<double>(n) + instance.gamma * z.dot(kz);
}

// q_{c,d}(x) = sum_n sqrt(w_n) [ c_n k(x_n, x) + d_n k(y_n, x) ]
inline double evaluate_q_cd(const FullSystemInstance& instance, const Vector& c, const Vector& d,
                            const Vector& x, Region x_region) {
    const TrajectoryDataset& data = instance.data;
    double acc = 0.0;
    for (Index i = 0; i < data.count; ++i) {
        const double sw = std::sqrt(data.w[i]);
        acc += sw * c[i] *
               kernel_eval(data.x.row(i).transpose(), data.x_region[static_cast<std::size_t>(i)], x, x_region,
                           instance.spec);
        acc += sw * d[i] *
               kernel_eval(data.y.row(i).transpose(), data.y_region[static_cast<std::size_t>(i)], x, x_region,
                           instance.spec);
    }
    return acc;
}

struct IsotropyResult {
    Matrix m;          // (1/N) sum g_i g_i^T
    double deviation;  // spectral distance of the whitened second moment from I
};

// Whitens the rows of `gradients` by M^{-1/2} and measures how far their
// second moment is from the identity.
inline IsotropyResult isotropy_check(const Matrix& gradients) {
    const Index n = gradients.rows();
    const Index d = gradients.cols();
    if (n < 1 || d < 1) throw InvalidArgumentError("isotropy_check: empty gradient matrix");
    const Matrix m = gradients.transpose() * gradients / static_cast<double>(n);

    Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
    if (eig.info() != Eigen::Success) throw NumericalError("isotropy_check: eigendecomposition failed");
    const Vector lambda = eig.eigenvalues();
    if (!(lambda.minCoeff() > 1e-12 * m.trace()))
        throw RankDeficientError("isotropy_check: average gradient outer product is singular");

    const Matrix inv_root =
        eig.eigenvectors() * lambda.cwiseInverse().cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
    const Matrix h = gradients * inv_root;  // rows are M^{-1/2} g_i
    const Matrix second = h.transpose() * h / static_cast<double>(n);

    Eigen::SelfAdjointEigenSolver<Matrix> dev(second - Matrix::Identity(d, d));
    const double deviation = dev.eigenvalues().cwiseAbs().maxCoeff();
    return IsotropyResult{m, deviation};
}

}  // namespace fcm
