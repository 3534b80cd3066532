#pragma once

// Overdamped Langevin simulation of the 10-d triple-well system and the
// two-stage importance-weighted dataset generation: start points sampled at
// the flatter inverse temperature beta_s, lagged end points run at the
// target beta, weights e^{(beta_s - beta) V(x_n)}.

#include "fcm/common.hpp"
#include "fcm/dataset.hpp"
#include "fcm/parallel.hpp"
#include "fcm/random.hpp"
#include "fcm/regions.hpp"

#include <cmath>
#include <string>

namespace fcm {

// Planar three-hole landscape: two deep wells near (+-1, 0), a shallow well
// near (0, 5/3), quartic confinement.
struct ThreeHolePotential {
    static double value(double u, double v) {
        const double e1 = std::exp(-u * u - (v - 1.0 / 3.0) * (v - 1.0 / 3.0));
        const double e2 = std::exp(-u * u - (v - 5.0 / 3.0) * (v - 5.0 / 3.0));
        const double e3 = std::exp(-(u - 1.0) * (u - 1.0) - v * v);
        const double e4 = std::exp(-(u + 1.0) * (u + 1.0) - v * v);
        const double q1 = u * u * u * u;
        const double q2 = (v - 1.0 / 3.0) * (v - 1.0 / 3.0) * (v - 1.0 / 3.0) * (v - 1.0 / 3.0);
        return 3.0 * e1 - 3.0 * e2 - 5.0 * e3 - 5.0 * e4 + 0.2 * q1 + 0.2 * q2;
    }

    static void gradient(double u, double v, double& du, double& dv) {
        const double e1 = std::exp(-u * u - (v - 1.0 / 3.0) * (v - 1.0 / 3.0));
        const double e2 = std::exp(-u * u - (v - 5.0 / 3.0) * (v - 5.0 / 3.0));
        const double e3 = std::exp(-(u - 1.0) * (u - 1.0) - v * v);
        const double e4 = std::exp(-(u + 1.0) * (u + 1.0) - v * v);
        du = -6.0 * u * e1 + 6.0 * u * e2 + 10.0 * (u - 1.0) * e3 + 10.0 * (u + 1.0) * e4 +
             0.8 * u * u * u;
        dv = -6.0 * (v - 1.0 / 3.0) * e1 + 6.0 * (v - 5.0 / 3.0) * e2 + 10.0 * v * e3 + 10.0 * v * e4 +
             0.8 * (v - 1.0 / 3.0) * (v - 1.0 / 3.0) * (v - 1.0 / 3.0);
    }
};

// V(x) = V0(x_1, x_2) + 2 sum_{i=3}^{10} x_i^2
struct TripleWell10 {
    static constexpr Index kDim = 10;

    double operator()(const Vector& x) const {
        double v = ThreeHolePotential::value(x[0], x[1]);
        for (Index i = 2; i < x.size(); ++i) v += 2.0 * x[i] * x[i];
        return v;
    }

    Vector gradient(const Vector& x) const {
        Vector g(x.size());
        ThreeHolePotential::gradient(x[0], x[1], g[0], g[1]);
        for (Index i = 2; i < x.size(); ++i) g[i] = 4.0 * x[i];
        return g;
    }
};

// 2-d restriction used by the reference-field Monte Carlo oracle.
struct ThreeHole2 {
    double operator()(const Vector& x) const { return ThreeHolePotential::value(x[0], x[1]); }
    Vector gradient(const Vector& x) const {
        Vector g(2);
        ThreeHolePotential::gradient(x[0], x[1], g[0], g[1]);
        return g;
    }
};

struct PotentialSpec {
    std::string name = "triple_well_10d";
    double beta = 2.0;
    double beta_s = 1.0;
    Index dim = 10;

    void validate() const {
        if (name != "triple_well_10d") throw InvalidArgumentError("PotentialSpec: unknown potential '" + name + "'");
        if (!(beta > 0.0) || !(beta_s > 0.0))
            throw InvalidArgumentError("PotentialSpec: inverse temperatures must be positive");
        if (dim != TripleWell10::kDim) throw InvalidArgumentError("PotentialSpec: triple_well_10d is 10-dimensional");
    }
};

struct SimulationPlan {
    double dt = 1e-3;
    double lag = 1e-2;       // tau
    double spacing = 1e-1;   // time between stored start points
    Index count = 0;         // N
    Index burn_in_steps = 10000;
    std::uint64_t seed = 0;

    static Index steps_of(double interval, double dt, const char* what) {
        const double ratio = interval / dt;
        const double rounded = std::round(ratio);
        if (!(rounded >= 1.0) || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio))
            throw InvalidArgumentError(std::string(what) + " must be a positive integer multiple of dt");
        return static_cast<Index>(rounded);
    }

    void validate() const {
        if (!(dt > 0.0)) throw InvalidArgumentError("SimulationPlan: dt must be positive");
        if (count < 1) throw InvalidArgumentError("SimulationPlan: sample count must be positive");
        steps_of(lag, dt, "SimulationPlan: lag");
        steps_of(spacing, dt, "SimulationPlan: spacing");
    }
};

// Euler-Maruyama update x - grad V(x) dt + sqrt(2 dt / beta) * noise.
template <class Potential>
Vector em_step(const Potential& pot, const Vector& x, double dt, double beta, const Vector& noise) {
    if (!(dt > 0.0)) throw InvalidArgumentError("em_step: dt must be positive");
    return x - pot.gradient(x) * dt + std::sqrt(2.0 * dt / beta) * noise;
}

template <class Potential>
Vector em_step(const Potential& pot, const Vector& x, double dt, double beta, Rng& rng) {
    Vector noise(x.size());
    rng.gaussian_fill(std::span<double>(noise.data(), static_cast<std::size_t>(noise.size())));
    return em_step(pot, x, dt, beta, noise);
}

// Advances `steps` Euler-Maruyama steps; step_offset only shifts the index
// reported on blow-up.
template <class Potential>
Vector run_steps(const Potential& pot, Vector x, Index steps, double dt, double beta, Rng& rng,
                 Index step_offset = 0) {
    for (Index k = 0; k < steps; ++k) {
        x = em_step(pot, x, dt, beta, rng);
        if (!x.allFinite())
            throw SimulationBlowupError("run_steps: state became non-finite", step_offset + k);
    }
    return x;
}

inline double importance_weight(double potential_value, double beta_s, double beta) {
    return std::exp((beta_s - beta) * potential_value);
}

// Stage 1: one chain at beta_s, storing a start point every spacing
// interval after burn-in. Stage 2: independent bursts of lag/dt steps at
// beta, one per start point, each on its own derived stream.
inline TrajectoryDataset generate_dataset(const SimulationPlan& plan, const PotentialSpec& pot,
                                          const RegionSpec& regions) {
    plan.validate();
    pot.validate();
    const TripleWell10 potential;
    const Index d = pot.dim;
    const Index lag_steps = SimulationPlan::steps_of(plan.lag, plan.dt, "lag");
    const Index spacing_steps = SimulationPlan::steps_of(plan.spacing, plan.dt, "spacing");

    Matrix x(plan.count, d);
    {
        Rng chain_rng(derive_seed(plan.seed, 1, 0));
        Vector state = Vector::Zero(d);
        state[0] = -1.0;  // start in the left deep well
        state = run_steps(potential, std::move(state), plan.burn_in_steps, plan.dt, pot.beta_s, chain_rng);
        for (Index n = 0; n < plan.count; ++n) {
            state = run_steps(potential, std::move(state), spacing_steps, plan.dt, pot.beta_s, chain_rng,
                              plan.burn_in_steps + n * spacing_steps);
            x.row(n) = state;
        }
    }

    Matrix y(plan.count, d);
    parallel_for(plan.count, [&](Index n) {
        Rng burst_rng(derive_seed(plan.seed, 2, static_cast<std::uint64_t>(n)));
        y.row(n) = run_steps(potential, x.row(n).transpose(), lag_steps, plan.dt, pot.beta, burst_rng);
    });

    Vector w(plan.count);
    for (Index n = 0; n < plan.count; ++n) {
        w[n] = importance_weight(potential(x.row(n).transpose()), pot.beta_s, pot.beta);
        if (!(w[n] > 0.0) || !std::isfinite(w[n]))
            throw NumericalError("generate_dataset: importance weight underflow/overflow at sample " +
                                 std::to_string(n));
    }

    TrajectoryDataset data = make_dataset(std::move(x), std::move(y), std::move(w), regions, plan.lag);
    data.beta = pot.beta;
    data.beta_s = pot.beta_s;
    return data;
}

}  // namespace fcm
