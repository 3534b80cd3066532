#pragma once

// Membership predicates for the endpoint sets A and B. Two named predicate
// shapes cover the toolkit: balls in the leading two coordinates (the
// triple-well sets) and intervals on a single coordinate (1-d chains).

#include "fcm/common.hpp"

#include <cmath>
#include <variant>

namespace fcm {

struct BallPredicate {
    double center1;
    double center2;
    double radius;

    bool contains(const Vector& x) const {
        if (x.size() < 2) throw InvalidArgumentError("BallPredicate: point must have at least two coordinates");
        const double du = x[0] - center1;
        const double dv = x[1] - center2;
        return du * du + dv * dv <= radius * radius;
    }
};

struct IntervalPredicate {
    Index coord;
    double lo;
    double hi;

    bool contains(const Vector& x) const {
        if (coord < 0 || coord >= x.size())
            throw InvalidArgumentError("IntervalPredicate: coordinate out of range");
        return x[coord] >= lo && x[coord] <= hi;
    }
};

using RegionPredicate = std::variant<BallPredicate, IntervalPredicate>;

inline bool predicate_contains(const RegionPredicate& p, const Vector& x) {
    return std::visit([&](const auto& pred) { return pred.contains(x); }, p);
}

class RegionSpec {
public:
    RegionSpec(RegionPredicate a, RegionPredicate b) : a_(std::move(a)), b_(std::move(b)) {}

    // A and B of the 10-d triple-well experiment: balls of radius 0.3 around
    // (-1, 0) and (1, 0) in the first two coordinates.
    static RegionSpec triple_well_defaults() {
        return RegionSpec(BallPredicate{-1.0, 0.0, 0.3}, BallPredicate{1.0, 0.0, 0.3});
    }

    bool in_a(const Vector& x) const { return predicate_contains(a_, x); }
    bool in_b(const Vector& x) const { return predicate_contains(b_, x); }

    Region classify(const Vector& x) const {
        const bool a = in_a(x);
        const bool b = in_b(x);
        if (a && b) throw InvalidRegionError("RegionSpec: A and B overlap at a queried point");
        if (a) return Region::A;
        if (b) return Region::B;
        return Region::Omega;
    }

    const RegionPredicate& a() const { return a_; }
    const RegionPredicate& b() const { return b_; }

private:
    RegionPredicate a_;
    RegionPredicate b_;
};

}  // namespace fcm
