#pragma once

// Exponential kernel over the scaled metric ||M^{1/2}(x - x')||. The kernel
// is identically zero as soon as either argument lies in A or B, and its
// gradient at coincident points is the zero pseudogradient.

#include "fcm/common.hpp"
#include "fcm/scaling.hpp"

#include <cmath>

namespace fcm {

struct KernelSpec {
    KernelSpec(double bandwidth_, ScalingMatrix scaling_)
        : bandwidth(bandwidth_), scaling(std::move(scaling_)) {
        if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
            throw InvalidArgumentError("KernelSpec: bandwidth must be positive and finite");
    }

    double bandwidth;
    ScalingMatrix scaling;
};

namespace detail {

inline void check_kernel_dims(const Vector& x, const Vector& xp, const KernelSpec& spec, const char* what) {
    if (x.size() != spec.scaling.dim() || xp.size() != spec.scaling.dim())
        throw InvalidArgumentError(std::string(what) + ": point dimension does not match kernel spec");
}

}  // namespace detail

inline double kernel_eval(const Vector& x, Region x_region, const Vector& xp, Region xp_region,
                          const KernelSpec& spec) {
    detail::check_kernel_dims(x, xp, spec, "kernel_eval");
    if (x_region != Region::Omega || xp_region != Region::Omega) return 0.0;
    const double dist = (spec.scaling.sqrt_entries() * (x - xp)).norm();
    return std::exp(-dist / spec.bandwidth);
}

// Gradient with respect to x; zero off Omega and at zero scaled distance.
inline Vector kernel_grad(const Vector& x, Region x_region, const Vector& xp, Region xp_region,
                          const KernelSpec& spec) {
    detail::check_kernel_dims(x, xp, spec, "kernel_grad");
    if (x_region != Region::Omega || xp_region != Region::Omega) return Vector::Zero(x.size());
    const Vector scaled_diff = spec.scaling.sqrt_entries() * (x - xp);
    const double dist = scaled_diff.norm();
    if (dist == 0.0) return Vector::Zero(x.size());
    const double k = std::exp(-dist / spec.bandwidth);
    // -1/eps * k * M (x - xp) / ||M^{1/2}(x - xp)||, with M(x-xp) = M^{1/2} * scaled_diff.
    return (-k / (spec.bandwidth * dist)) * (spec.scaling.sqrt_entries() * scaled_diff);
}

}  // namespace fcm
