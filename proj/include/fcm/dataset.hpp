#pragma once

// Time-lagged training pairs (x_n, y_n) with importance weights and region
// labels, plus the text serialization used by the CLI.

#include "fcm/common.hpp"
#include "fcm/io.hpp"
#include "fcm/random.hpp"
#include "fcm/regions.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace fcm {

struct TrajectoryDataset {
    Index dim = 0;
    Index count = 0;
    Matrix x;  // N x d start points
    Matrix y;  // N x d lagged end points
    Vector w;  // positive importance weights
    std::vector<Region> x_region;
    std::vector<Region> y_region;
    double lag = 0.0;
    double beta = 0.0;    // target inverse temperature (metadata, 0 if n/a)
    double beta_s = 0.0;  // sampling inverse temperature (metadata, 0 if n/a)
    std::vector<std::pair<std::string, std::string>> extra_header;
};

// Labels every point through the region predicates (which also asserts that
// A and B are disjoint on the data) and validates the dataset invariants.
inline TrajectoryDataset make_dataset(Matrix x, Matrix y, Vector w, const RegionSpec& regions,
                                      double lag) {
    TrajectoryDataset out;
    out.count = x.rows();
    out.dim = x.cols();
    if (out.count < 1 || out.dim < 1) throw InvalidArgumentError("make_dataset: empty dataset");
    if (y.rows() != out.count || y.cols() != out.dim || w.size() != out.count)
        throw InvalidArgumentError("make_dataset: inconsistent shapes");
    for (Index i = 0; i < out.count; ++i)
        if (!(w[i] > 0.0) || !std::isfinite(w[i]))
            throw InvalidArgumentError("make_dataset: weights must be positive and finite");
    out.x = std::move(x);
    out.y = std::move(y);
    out.w = std::move(w);
    out.lag = lag;
    out.x_region.resize(static_cast<std::size_t>(out.count));
    out.y_region.resize(static_cast<std::size_t>(out.count));
    for (Index i = 0; i < out.count; ++i) {
        out.x_region[static_cast<std::size_t>(i)] = regions.classify(out.x.row(i).transpose());
        out.y_region[static_cast<std::size_t>(i)] = regions.classify(out.y.row(i).transpose());
    }
    return out;
}

inline TrajectoryDataset take_rows(const TrajectoryDataset& data, const std::vector<Index>& rows) {
    TrajectoryDataset out;
    out.dim = data.dim;
    out.count = static_cast<Index>(rows.size());
    if (out.count < 1) throw InvalidArgumentError("take_rows: empty selection");
    out.x.resize(out.count, data.dim);
    out.y.resize(out.count, data.dim);
    out.w.resize(out.count);
    out.x_region.resize(rows.size());
    out.y_region.resize(rows.size());
    for (Index i = 0; i < out.count; ++i) {
        const Index r = rows[static_cast<std::size_t>(i)];
        out.x.row(i) = data.x.row(r);
        out.y.row(i) = data.y.row(r);
        out.w[i] = data.w[r];
        out.x_region[static_cast<std::size_t>(i)] = data.x_region[static_cast<std::size_t>(r)];
        out.y_region[static_cast<std::size_t>(i)] = data.y_region[static_cast<std::size_t>(r)];
    }
    out.lag = data.lag;
    out.beta = data.beta;
    out.beta_s = data.beta_s;
    return out;
}

inline std::vector<Index> shuffled_indices(Index n, Rng& rng) {
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    for (Index i = n - 1; i > 0; --i)
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i + 1)))]);
    return idx;
}

// n pairs chosen uniformly at random without replacement.
inline TrajectoryDataset subsample(const TrajectoryDataset& data, Index n, Rng& rng) {
    if (n < 1 || n > data.count) throw InvalidArgumentError("subsample: requested size out of range");
    auto idx = shuffled_indices(data.count, rng);
    idx.resize(static_cast<std::size_t>(n));
    return take_rows(data, idx);
}

// Deterministic seeded shuffle, leading (1 - val_fraction) share to train.
inline std::pair<TrajectoryDataset, TrajectoryDataset> split_train_validation(
    const TrajectoryDataset& data, double val_fraction, Rng& rng) {
    if (!(val_fraction > 0.0) || !(val_fraction < 1.0))
        throw InvalidArgumentError("split_train_validation: fraction must lie in (0, 1)");
    const Index n_val = std::max<Index>(1, static_cast<Index>(std::llround(val_fraction * static_cast<double>(data.count))));
    if (n_val >= data.count) throw InvalidArgumentError("split_train_validation: dataset too small to split");
    const auto idx = shuffled_indices(data.count, rng);
    std::vector<Index> train_idx(idx.begin(), idx.end() - n_val);
    std::vector<Index> val_idx(idx.end() - n_val, idx.end());
    return {take_rows(data, train_idx), take_rows(data, val_idx)};
}

// File format: one header line
//   d=<d>,N=<N>,tau=<tau>,beta=<beta>,beta_s=<beta_s>[,extra=...]
// followed by N rows of 2d+3 comma-separated values: x, y, w, x_region,
// y_region with regions coded A/B/O. Floats round-trip exactly.
inline void write_dataset(const TrajectoryDataset& data, const std::string& path) {
    auto out = open_output(path);
    out << "d=" << data.dim << ",N=" << data.count << ",tau=" << format_double(data.lag)
        << ",beta=" << format_double(data.beta) << ",beta_s=" << format_double(data.beta_s);
    for (const auto& [k, v] : data.extra_header) out << ',' << k << '=' << v;
    out << '\n';
    std::string line;
    for (Index i = 0; i < data.count; ++i) {
        line.clear();
        for (Index j = 0; j < data.dim; ++j) {
            line += format_double(data.x(i, j));
            line += ',';
        }
        for (Index j = 0; j < data.dim; ++j) {
            line += format_double(data.y(i, j));
            line += ',';
        }
        line += format_double(data.w[i]);
        line += ',';
        line += region_code(data.x_region[static_cast<std::size_t>(i)]);
        line += ',';
        line += region_code(data.y_region[static_cast<std::size_t>(i)]);
        out << line << '\n';
    }
    if (!out) throw IoError("failed writing dataset: " + path);
}

inline TrajectoryDataset read_dataset(const std::string& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("dataset file is empty: " + path);
    const auto header = parse_header(line);
    TrajectoryDataset data;
    data.dim = parse_int(header_value(header, "d"));
    data.count = parse_int(header_value(header, "N"));
    data.lag = parse_double(header_value(header, "tau"));
    data.beta = parse_double(header_value(header, "beta"));
    data.beta_s = parse_double(header_value(header, "beta_s"));
    for (const auto& [k, v] : header)
        if (k != "d" && k != "N" && k != "tau" && k != "beta" && k != "beta_s") data.extra_header.emplace_back(k, v);
    if (data.dim < 1 || data.count < 1) throw IoError("dataset header has invalid sizes: " + path);

    data.x.resize(data.count, data.dim);
    data.y.resize(data.count, data.dim);
    data.w.resize(data.count);
    data.x_region.resize(static_cast<std::size_t>(data.count));
    data.y_region.resize(static_cast<std::size_t>(data.count));
    const std::size_t expected = static_cast<std::size_t>(2 * data.dim + 3);
    for (Index i = 0; i < data.count; ++i) {
        if (!std::getline(in, line)) throw IoError("dataset truncated at row " + std::to_string(i) + ": " + path);
        const auto fields = split_view(line, ',');
        if (fields.size() != expected) throw IoError("dataset row " + std::to_string(i) + " malformed: " + path);
        std::size_t f = 0;
        for (Index j = 0; j < data.dim; ++j) data.x(i, j) = parse_double(fields[f++]);
        for (Index j = 0; j < data.dim; ++j) data.y(i, j) = parse_double(fields[f++]);
        data.w[i] = parse_double(fields[f++]);
        if (!(data.w[i] > 0.0)) throw IoError("dataset row " + std::to_string(i) + " has non-positive weight");
        if (fields[f].size() != 1 || fields[f + 1].size() != 1)
            throw IoError("dataset row " + std::to_string(i) + " has malformed region codes");
        data.x_region[static_cast<std::size_t>(i)] = region_from_code(fields[f][0]);
        data.y_region[static_cast<std::size_t>(i)] = region_from_code(fields[f + 1][0]);
    }
    return data;
}

}  // namespace fcm
