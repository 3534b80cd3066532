#pragma once

// Seeded random streams. All sampling goes through explicitly constructed
// generators so that a master seed plus stream ids reproduces every draw;
// the gaussian and categorical samplers are spelled out (instead of the
// <random> distributions) because their draw counts and outputs must be
// stable across standard-library versions.

#include "fcm/common.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace fcm {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent stream seed from a master seed and up to two stream ids.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t id0, std::uint64_t id1 = 0) {
    std::uint64_t h = splitmix64(master ^ 0x6a09e667f3bcc909ULL);
    h = splitmix64(h ^ splitmix64(id0));
    h = splitmix64(h ^ splitmix64(id1 + 0x3c6ef372fe94f82bULL));
    return h;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    // Uniform on [0, 1), 53 usable bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; safe as a log argument.
    double uniform_pos() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return engine_() % n; }

    // One standard normal draw (Box-Muller, sine half discarded so each call
    // consumes exactly two engine words).
    double gaussian() {
        const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
        return r * std::cos(2.0 * M_PI * uniform());
    }

    // Fill with standard normals, both Box-Muller halves used; consumes
    // 2*ceil(n/2) engine words regardless of history.
    void gaussian_fill(std::span<double> out) {
        std::size_t i = 0;
        while (i + 2 <= out.size()) {
            const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
            const double a = 2.0 * M_PI * uniform();
            out[i] = r * std::cos(a);
            out[i + 1] = r * std::sin(a);
            i += 2;
        }
        if (i < out.size()) out[i] = gaussian();
    }

private:
    std::mt19937_64 engine_;
};

// Inverse-CDF sampler over nonnegative weights. Zero-weight categories are
// unreachable by construction of upper_bound on the running sums.
class CategoricalCdf {
public:
    explicit CategoricalCdf(const Vector& weights) : cdf_(static_cast<std::size_t>(weights.size())) {
        double run = 0.0;
        for (Index i = 0; i < weights.size(); ++i) {
            run += weights[i];
            cdf_[static_cast<std::size_t>(i)] = run;
        }
        total_ = run;
    }

    double total() const { return total_; }

    Index sample(Rng& rng) const {
        const double target = rng.uniform() * total_;
        const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), target);
        return static_cast<Index>(it == cdf_.end() ? cdf_.size() - 1 : static_cast<std::size_t>(it - cdf_.begin()));
    }

private:
    std::vector<double> cdf_;
    double total_ = 0.0;
};

}  // namespace fcm
