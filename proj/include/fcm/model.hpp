#pragma once

// Fitted committor model: landmark pairs, coefficients, and the kernel spec.
// Prediction is exact 0 on A and 1 on B; on Omega it is the landmark kernel
// sum evaluated in transformed coordinates.

#include "fcm/common.hpp"
#include "fcm/dataset.hpp"
#include "fcm/io.hpp"
#include "fcm/kernel.hpp"
#include "fcm/parallel.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace fcm {

class FcmModel {
public:
    FcmModel(KernelSpec spec, std::vector<Index> landmarks, Vector eta, Matrix landmark_x,
             Matrix landmark_y, Vector landmark_w, std::vector<Region> landmark_x_region,
             std::vector<Region> landmark_y_region)
        : spec_(std::move(spec)),
          landmarks_(std::move(landmarks)),
          eta_(std::move(eta)),
          lx_(std::move(landmark_x)),
          ly_(std::move(landmark_y)),
          lw_(std::move(landmark_w)),
          lx_region_(std::move(landmark_x_region)),
          ly_region_(std::move(landmark_y_region)) {
        const Index s = static_cast<Index>(landmarks_.size());
        if (eta_.size() != s || lx_.rows() != s || ly_.rows() != s || lw_.size() != s ||
            static_cast<Index>(lx_region_.size()) != s || static_cast<Index>(ly_region_.size()) != s)
            throw InvalidArgumentError("FcmModel: inconsistent landmark shapes");
        if (s > 0 && lx_.cols() != spec_.scaling.dim())
            throw InvalidArgumentError("FcmModel: landmark dimension does not match kernel spec");
        rebuild_cache();
    }

    const KernelSpec& spec() const { return spec_; }
    const std::vector<Index>& landmarks() const { return landmarks_; }
    const Vector& eta() const { return eta_; }
    const Matrix& landmark_x() const { return lx_; }
    const Matrix& landmark_y() const { return ly_; }
    const Vector& landmark_w() const { return lw_; }
    const std::vector<Region>& landmark_x_region() const { return lx_region_; }
    const std::vector<Region>& landmark_y_region() const { return ly_region_; }
    Index dim() const { return spec_.scaling.dim(); }
    Index size() const { return static_cast<Index>(landmarks_.size()); }

    // Transformed landmark coordinates (d x r) and eta_i * sqrt(w_i).
    const Matrix& transformed_x() const { return tlx_; }
    const Matrix& transformed_y() const { return tly_; }
    const Vector& coefficients() const { return pref_; }

private:
    void rebuild_cache() {
        tlx_ = spec_.scaling.sqrt_entries() * lx_.transpose();
        tly_ = spec_.scaling.sqrt_entries() * ly_.transpose();
        pref_ = eta_.cwiseProduct(lw_.cwiseSqrt());
    }

    KernelSpec spec_;
    std::vector<Index> landmarks_;
    Vector eta_;
    Matrix lx_, ly_;
    Vector lw_;
    std::vector<Region> lx_region_, ly_region_;
    Matrix tlx_, tly_;
    Vector pref_;
};

inline double predict(const FcmModel& model, const Vector& x, Region x_region) {
    if (x.size() != model.dim()) throw InvalidArgumentError("predict: point dimension does not match model");
    if (x_region == Region::A) return 0.0;
    if (x_region == Region::B) return 1.0;
    const double inv_eps = 1.0 / model.spec().bandwidth;
    const Vector tx = model.spec().scaling.sqrt_entries() * x;
    double acc = 0.0;
    for (Index i = 0; i < model.size(); ++i) {
        const std::size_t si = static_cast<std::size_t>(i);
        double term = 0.0;
        if (model.landmark_x_region()[si] == Region::Omega)
            term += std::exp(-(model.transformed_x().col(i) - tx).norm() * inv_eps);
        if (model.landmark_y_region()[si] == Region::Omega)
            term -= std::exp(-(model.transformed_y().col(i) - tx).norm() * inv_eps);
        acc += model.coefficients()[i] * term;
    }
    return acc;
}

// Analytic gradient of the Omega branch; zero on the constant branches and,
// termwise, at zero scaled distance (the kernel pseudogradient).
inline Vector predict_grad(const FcmModel& model, const Vector& x, Region x_region) {
    if (x.size() != model.dim()) throw InvalidArgumentError("predict_grad: point dimension does not match model");
    if (x_region != Region::Omega) return Vector::Zero(x.size());
    const double inv_eps = 1.0 / model.spec().bandwidth;
    const Vector tx = model.spec().scaling.sqrt_entries() * x;
    Vector acc = Vector::Zero(x.size());
    for (Index i = 0; i < model.size(); ++i) {
        const std::size_t si = static_cast<std::size_t>(i);
        if (model.landmark_x_region()[si] == Region::Omega) {
            const Vector diff = tx - model.transformed_x().col(i);
            const double dist = diff.norm();
            if (dist > 0.0) acc += (model.coefficients()[i] * std::exp(-dist * inv_eps) / dist) * diff;
        }
        if (model.landmark_y_region()[si] == Region::Omega) {
            const Vector diff = tx - model.transformed_y().col(i);
            const double dist = diff.norm();
            if (dist > 0.0) acc -= (model.coefficients()[i] * std::exp(-dist * inv_eps) / dist) * diff;
        }
    }
    return model.spec().scaling.sqrt_entries() * (-inv_eps * acc);
}

// Batched evaluation over row-stacked points. Distances use the
// squared-norm expansion so each chunk is a pair of matrix products plus
// elementwise exponentials; chunk boundaries are fixed, so results do not
// depend on the worker count. Gradient terms closer than kCoincident in
// transformed coordinates take the zero pseudogradient.
class BatchEvaluator {
public:
    explicit BatchEvaluator(const FcmModel& model)
        : model_(model),
          sq_lx_(model.transformed_x().colwise().squaredNorm().transpose()),
          sq_ly_(model.transformed_y().colwise().squaredNorm().transpose()),
          mask_x_(model.size()),
          mask_y_(model.size()) {
        for (Index i = 0; i < model.size(); ++i) {
            mask_x_[i] = model.landmark_x_region()[static_cast<std::size_t>(i)] == Region::Omega ? 1.0 : 0.0;
            mask_y_[i] = model.landmark_y_region()[static_cast<std::size_t>(i)] == Region::Omega ? 1.0 : 0.0;
        }
        coeff_x_ = model.coefficients().cwiseProduct(mask_x_);
        coeff_y_ = model.coefficients().cwiseProduct(mask_y_);
    }

    // Committor values with the exact 0/1 boundary overrides.
    Vector values(const Matrix& points, const std::vector<Region>& regions) const {
        check(points, regions);
        Vector out(points.rows());
        for_chunks(points.rows(), [&](Index lo, Index m) {
            const Matrix tp = model_.spec().scaling.sqrt_entries() * points.middleRows(lo, m).transpose();
            const Vector sq_p = tp.colwise().squaredNorm().transpose();
            const Matrix kx = kernel_block(model_.transformed_x(), sq_lx_, tp, sq_p);
            const Matrix ky = kernel_block(model_.transformed_y(), sq_ly_, tp, sq_p);
            out.segment(lo, m) = kx.transpose() * coeff_x_ - ky.transpose() * coeff_y_;
        });
        for (Index i = 0; i < points.rows(); ++i) {
            if (regions[static_cast<std::size_t>(i)] == Region::A) out[i] = 0.0;
            if (regions[static_cast<std::size_t>(i)] == Region::B) out[i] = 1.0;
        }
        return out;
    }

    // Gradients as rows; zero rows off Omega.
    Matrix gradients(const Matrix& points, const std::vector<Region>& regions) const {
        check(points, regions);
        const double inv_eps = 1.0 / model_.spec().bandwidth;
        Matrix out(points.rows(), model_.dim());
        for_chunks(points.rows(), [&](Index lo, Index m) {
            const Matrix tp = model_.spec().scaling.sqrt_entries() * points.middleRows(lo, m).transpose();
            const Vector sq_p = tp.colwise().squaredNorm().transpose();
            // c(i,j) = coeff_i k(i,j) / dist(i,j), zero at coincident pairs
            const Matrix cx = ratio_block(model_.transformed_x(), sq_lx_, tp, sq_p, coeff_x_);
            const Matrix cy = ratio_block(model_.transformed_y(), sq_ly_, tp, sq_p, coeff_y_);
            // sum_i c(i,j) (tp_j - tl_i) = tp_j * colsum(c)_j - TL * c(:,j)
            Matrix s = tp * (cx.colwise().sum() - cy.colwise().sum()).asDiagonal();
            s.noalias() -= model_.transformed_x() * cx;
            s.noalias() += model_.transformed_y() * cy;
            out.middleRows(lo, m) = (-inv_eps) * (model_.spec().scaling.sqrt_entries() * s).transpose();
        });
        for (Index i = 0; i < points.rows(); ++i)
            if (regions[static_cast<std::size_t>(i)] != Region::Omega) out.row(i).setZero();
        return out;
    }

private:
    static constexpr Index kChunk = 256;
    static constexpr double kCoincident = 1e-12;

    void check(const Matrix& points, const std::vector<Region>& regions) const {
        if (points.cols() != model_.dim() || static_cast<Index>(regions.size()) != points.rows())
            throw InvalidArgumentError("BatchEvaluator: inconsistent point block");
    }

    template <class Fn>
    static void for_chunks(Index n, Fn&& fn) {
        const Index chunks = (n + kChunk - 1) / kChunk;
        parallel_for(chunks, [&](Index c) {
            const Index lo = c * kChunk;
            fn(lo, std::min(kChunk, n - lo));
        });
    }

    // r x m matrix of squared distances between landmark columns and tp.
    static Matrix distance_sq(const Matrix& landmarks, const Vector& sq_l, const Matrix& tp,
                              const Vector& sq_p) {
        Matrix d = landmarks.transpose() * tp;
        d *= -2.0;
        d.colwise() += sq_l;
        d.rowwise() += sq_p.transpose();
        return d.array().max(0.0).matrix();
    }

    Matrix kernel_block(const Matrix& landmarks, const Vector& sq_l, const Matrix& tp,
                        const Vector& sq_p) const {
        Matrix d = distance_sq(landmarks, sq_l, tp, sq_p);
        d = (d.array().sqrt() * (-1.0 / model_.spec().bandwidth)).exp().matrix();
        return d;
    }

    Matrix ratio_block(const Matrix& landmarks, const Vector& sq_l, const Matrix& tp, const Vector& sq_p,
                       const Vector& coeff) const {
        const double inv_eps = 1.0 / model_.spec().bandwidth;
        const Eigen::ArrayXXd dist = distance_sq(landmarks, sq_l, tp, sq_p).array().sqrt();
        Matrix d = (dist > kCoincident).select((dist * (-inv_eps)).exp() / dist, 0.0).matrix();
        d.array().colwise() *= coeff.array();
        return d;
    }

    const FcmModel& model_;
    Vector sq_lx_, sq_ly_;
    Vector mask_x_, mask_y_;
    Vector coeff_x_, coeff_y_;
};

// Versioned text record: "FCM1" magic, a key=value header, the scaling
// matrix row-major, landmark indices, coefficients, and landmark rows in the
// dataset row layout.
inline void write_model(const FcmModel& model, const std::string& path,
                        const std::vector<std::pair<std::string, std::string>>& extra = {}) {
    auto out = open_output(path);
    const Index d = model.dim();
    out << "FCM1\n";
    out << "d=" << d << ",epsilon=" << format_double(model.spec().bandwidth) << ",r=" << model.size()
        << ",version=" << kArtifactVersion;
    for (const auto& [k, v] : extra) out << ',' << k << '=' << v;
    out << '\n';
    out << "M:";
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j)
            out << (i == 0 && j == 0 ? "" : ",") << format_double(model.spec().scaling.entries()(i, j));
    out << '\n';
    out << "S:";
    for (Index i = 0; i < model.size(); ++i) out << (i == 0 ? "" : ",") << model.landmarks()[static_cast<std::size_t>(i)];
    out << '\n';
    out << "eta:";
    for (Index i = 0; i < model.size(); ++i) out << (i == 0 ? "" : ",") << format_double(model.eta()[i]);
    out << '\n';
    for (Index i = 0; i < model.size(); ++i) {
        for (Index j = 0; j < d; ++j) out << format_double(model.landmark_x()(i, j)) << ',';
        for (Index j = 0; j < d; ++j) out << format_double(model.landmark_y()(i, j)) << ',';
        out << format_double(model.landmark_w()[i]) << ','
            << region_code(model.landmark_x_region()[static_cast<std::size_t>(i)]) << ','
            << region_code(model.landmark_y_region()[static_cast<std::size_t>(i)]) << '\n';
    }
    if (!out) throw IoError("failed writing model: " + path);
}

inline FcmModel read_model(const std::string& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line) || line != "FCM1") throw IoError("not an FCM1 model file: " + path);
    if (!std::getline(in, line)) throw IoError("model header missing: " + path);
    const auto header = parse_header(line);
    const Index d = parse_int(header_value(header, "d"));
    const double epsilon = parse_double(header_value(header, "epsilon"));
    const Index r = parse_int(header_value(header, "r"));
    if (d < 1 || r < 0) throw IoError("model header has invalid sizes: " + path);

    auto expect_section = [&](const char* tag) {
        if (!std::getline(in, line) || line.rfind(tag, 0) != 0)
            throw IoError(std::string("model section '") + tag + "' missing: " + path);
        return std::string_view(line).substr(std::string_view(tag).size());
    };

    Matrix m(d, d);
    {
        const auto fields = split_view(expect_section("M:"), ',');
        if (static_cast<Index>(fields.size()) != d * d) throw IoError("model M section malformed: " + path);
        for (Index i = 0; i < d; ++i)
            for (Index j = 0; j < d; ++j) m(i, j) = parse_double(fields[static_cast<std::size_t>(i * d + j)]);
    }
    std::vector<Index> landmarks(static_cast<std::size_t>(r));
    {
        const auto fields = split_view(expect_section("S:"), ',');
        if (static_cast<Index>(fields.size()) != r && !(r == 0 && fields.size() == 1 && fields[0].empty()))
            throw IoError("model S section malformed: " + path);
        for (Index i = 0; i < r; ++i) landmarks[static_cast<std::size_t>(i)] = parse_int(fields[static_cast<std::size_t>(i)]);
    }
    Vector eta(r);
    {
        const auto fields = split_view(expect_section("eta:"), ',');
        if (static_cast<Index>(fields.size()) != r && !(r == 0 && fields.size() == 1 && fields[0].empty()))
            throw IoError("model eta section malformed: " + path);
        for (Index i = 0; i < r; ++i) eta[i] = parse_double(fields[static_cast<std::size_t>(i)]);
    }
    Matrix lx(r, d), ly(r, d);
    Vector lw(r);
    std::vector<Region> lxr(static_cast<std::size_t>(r)), lyr(static_cast<std::size_t>(r));
    const std::size_t expected = static_cast<std::size_t>(2 * d + 3);
    for (Index i = 0; i < r; ++i) {
        if (!std::getline(in, line)) throw IoError("model landmarks truncated: " + path);
        const auto fields = split_view(line, ',');
        if (fields.size() != expected) throw IoError("model landmark row malformed: " + path);
        std::size_t f = 0;
        for (Index j = 0; j < d; ++j) lx(i, j) = parse_double(fields[f++]);
        for (Index j = 0; j < d; ++j) ly(i, j) = parse_double(fields[f++]);
        lw[i] = parse_double(fields[f++]);
        if (fields[f].size() != 1 || fields[f + 1].size() != 1) throw IoError("model landmark row malformed: " + path);
        lxr[static_cast<std::size_t>(i)] = region_from_code(fields[f][0]);
        lyr[static_cast<std::size_t>(i)] = region_from_code(fields[f + 1][0]);
    }
    return FcmModel(KernelSpec(epsilon, ScalingMatrix(m)), std::move(landmarks), std::move(eta),
                    std::move(lx), std::move(ly), std::move(lw), std::move(lxr), std::move(lyr));
}

}  // namespace fcm
