#pragma once

// Ground truth for the planar triple-well committor: a finite-difference
// solve of beta^{-1} Lap q - grad V0 . grad q = 0 with q = 0 on A, 1 on B,
// reflecting outer box; a Monte Carlo hitting-probability oracle; and the
// mean squared error of a fitted model against the reference grid.

#include "fcm/common.hpp"
#include "fcm/dynamics.hpp"
#include "fcm/io.hpp"
#include "fcm/model.hpp"
#include "fcm/parallel.hpp"
#include "fcm/random.hpp"
#include "fcm/regions.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace fcm {

enum class NodeMask : std::uint8_t { A, B, Omega, Exterior };

struct ReferenceGridParams {
    double u_min = -2.5;
    double u_max = 2.5;
    double v_min = -1.5;
    double v_max = 2.5;
    Index nu = 401;
    Index nv = 321;
};

struct ReferenceField {
    double u_min, u_max, v_min, v_max;
    Index nu, nv;
    Matrix values;                // nu x nv, values(iu, iv)
    std::vector<NodeMask> mask;   // empty when loaded from file

    // Barycentric node coordinates: on a grid with u_min = -u_max the
    // mirrored node is the exact floating-point negation, so region masks
    // and stencils are mirror images bit for bit.
    double u_at(Index i) const {
        return (u_min * static_cast<double>(nu - 1 - i) + u_max * static_cast<double>(i)) /
               static_cast<double>(nu - 1);
    }
    double v_at(Index j) const {
        return (v_min * static_cast<double>(nv - 1 - j) + v_max * static_cast<double>(j)) /
               static_cast<double>(nv - 1);
    }

    bool contains(double u, double v) const {
        return u >= u_min && u <= u_max && v >= v_min && v <= v_max;
    }

    double interpolate(double u, double v) const {
        if (!contains(u, v)) throw InvalidArgumentError("ReferenceField: point outside grid");
        const double hu = (u_max - u_min) / static_cast<double>(nu - 1);
        const double hv = (v_max - v_min) / static_cast<double>(nv - 1);
        Index i = static_cast<Index>((u - u_min) / hu);
        Index j = static_cast<Index>((v - v_min) / hv);
        if (i >= nu - 1) i = nu - 2;
        if (j >= nv - 1) j = nv - 2;
        const double su = (u - u_at(i)) / hu;
        const double sv = (v - v_at(j)) / hv;
        return (1.0 - su) * (1.0 - sv) * values(i, j) + su * (1.0 - sv) * values(i + 1, j) +
               (1.0 - su) * sv * values(i, j + 1) + su * sv * values(i + 1, j + 1);
    }
};

namespace detail {

// Fraction theta in (0, 1] of the step from an Omega node at which the
// segment toward an A/B neighbor crosses the set boundary. Ball predicates
// get the exact circle crossing (the stencil leg is shortened so the
// Dirichlet value sits on the circle, keeping the scheme second order);
// other predicate shapes fall back to the full leg.
inline double boundary_leg(const RegionPredicate& predicate, double u, double v, double du, double dv) {
    const auto* ball = std::get_if<BallPredicate>(&predicate);
    if (ball == nullptr) return 1.0;
    const double pu = u - ball->center1;
    const double pv = v - ball->center2;
    const double a = du * du + dv * dv;
    const double b = 2.0 * (pu * du + pv * dv);
    const double c = pu * pu + pv * pv - ball->radius * ball->radius;
    const double disc = b * b - 4.0 * a * c;
    if (!(disc > 0.0)) return 1.0;
    const double root = std::sqrt(disc);
    const double q = -0.5 * (b + (b >= 0.0 ? root : -root));
    double theta = 2.0;
    for (const double t : {q / a, c / q})
        if (t > 0.0 && t < theta) theta = t;
    if (theta > 1.0) theta = 1.0;
    return std::max(theta, 1e-6);
}

}  // namespace detail

// Second-order central differences on the interior, homogeneous Neumann at
// the outer box by ghost-node reflection, Dirichlet 0/1 on A/B nodes with
// Shortley-Weller legs at the set boundaries.
inline ReferenceField solve_reference(const RegionSpec& regions, double beta,
                                      const ReferenceGridParams& grid = {}) {
    if (!(beta > 0.0)) throw InvalidArgumentError("solve_reference: beta must be positive");
    if (grid.nu < 3 || grid.nv < 3 || !(grid.u_max > grid.u_min) || !(grid.v_max > grid.v_min))
        throw InvalidArgumentError("solve_reference: malformed grid");

    ReferenceField field{grid.u_min, grid.u_max, grid.v_min, grid.v_max, grid.nu, grid.nv,
                         Matrix::Zero(grid.nu, grid.nv), {}};
    const Index nu = grid.nu, nv = grid.nv;
    const double hu = (grid.u_max - grid.u_min) / static_cast<double>(nu - 1);
    const double hv = (grid.v_max - grid.v_min) / static_cast<double>(nv - 1);

    field.mask.resize(static_cast<std::size_t>(nu * nv));
    std::vector<Index> unknown(static_cast<std::size_t>(nu * nv), -1);
    Index n_unknown = 0, n_a = 0, n_b = 0;
    for (Index i = 0; i < nu; ++i) {
        for (Index j = 0; j < nv; ++j) {
            Vector p(2);
            p << field.u_at(i), field.v_at(j);
            const Region r = regions.classify(p);
            NodeMask m = NodeMask::Omega;
            if (r == Region::A) {
                m = NodeMask::A;
                ++n_a;
            } else if (r == Region::B) {
                m = NodeMask::B;
                field.values(i, j) = 1.0;
                ++n_b;
            } else {
                unknown[static_cast<std::size_t>(i * nv + j)] = n_unknown++;
            }
            field.mask[static_cast<std::size_t>(i * nv + j)] = m;
        }
    }
    if (n_a == 0 || n_b == 0)
        throw InvalidRegionError("solve_reference: A or B contains no grid node");

    const double inv_beta = 1.0 / beta;
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(5 * n_unknown));
    Vector rhs = Vector::Zero(n_unknown);

    for (Index i = 0; i < nu; ++i) {
        for (Index j = 0; j < nv; ++j) {
            const Index row = unknown[static_cast<std::size_t>(i * nv + j)];
            if (row < 0) continue;
            const double u = field.u_at(i);
            const double v = field.v_at(j);
            double gu, gv;
            ThreeHolePotential::gradient(u, v, gu, gv);

            struct Entry {
                Index node;    // flat neighbor index, -1 for a Dirichlet leg
                double value;  // Dirichlet value when node < 0
                double coeff;
            };
            Entry entries[4];
            int n_entries = 0;
            double center = 0.0;

            // One axis: legs theta_p (forward) and theta_m (backward) of the
            // base spacing h, with the unequal-spacing second-derivative and
            // first-derivative stencils. A Dirichlet neighbor shortens its
            // leg to the set boundary; a box edge reflects (pure diffusion,
            // centered advection cancels).
            auto axis = [&](double h, double adv, Index ip, Index jp, Index im, Index jm, bool at_edge) {
                if (at_edge) {
                    // ip/jp holds the single interior neighbor after reflection
                    const Index flat = ip * nv + jp;
                    const NodeMask m = field.mask[static_cast<std::size_t>(flat)];
                    if (m == NodeMask::Omega)
                        entries[n_entries++] = Entry{flat, 0.0, 2.0 * inv_beta / (h * h)};
                    else
                        entries[n_entries++] =
                            Entry{-1, m == NodeMask::B ? 1.0 : 0.0, 2.0 * inv_beta / (h * h)};
                    center += -2.0 * inv_beta / (h * h);
                    return;
                }
                auto leg = [&](Index ni, Index nj, double du, double dv_) {
                    const NodeMask m = field.mask[static_cast<std::size_t>(ni * nv + nj)];
                    if (m == NodeMask::Omega)
                        return std::tuple<double, Index, double>(1.0, ni * nv + nj, 0.0);
                    const RegionPredicate& pred = m == NodeMask::A ? regions.a() : regions.b();
                    const double theta = detail::boundary_leg(pred, u, v, du, dv_);
                    return std::tuple<double, Index, double>(theta, -1, m == NodeMask::B ? 1.0 : 0.0);
                };
                const bool u_axis = ip != i;
                const auto [tp, node_p, val_p] = leg(ip, jp, u_axis ? h : 0.0, u_axis ? 0.0 : h);
                const auto [tm, node_m, val_m] = leg(im, jm, u_axis ? -h : 0.0, u_axis ? 0.0 : -h);
                const double sum = tp + tm;
                const double denom = tp * tm * sum * h;
                const double c_p = 2.0 * inv_beta / (h * h * tp * sum) - adv * tm * tm / denom;
                const double c_m = 2.0 * inv_beta / (h * h * tm * sum) + adv * tp * tp / denom;
                center += -2.0 * inv_beta / (h * h * tp * tm) - adv * (tp * tp - tm * tm) / denom;
                entries[n_entries++] = Entry{node_p, val_p, c_p};
                entries[n_entries++] = Entry{node_m, val_m, c_m};
            };

            if (i == 0)
                axis(hu, gu, 1, j, -1, -1, true);
            else if (i == nu - 1)
                axis(hu, gu, nu - 2, j, -1, -1, true);
            else
                axis(hu, gu, i + 1, j, i - 1, j, false);
            if (j == 0)
                axis(hv, gv, i, 1, -1, -1, true);
            else if (j == nv - 1)
                axis(hv, gv, i, nv - 2, -1, -1, true);
            else
                axis(hv, gv, i, j + 1, i, j - 1, false);

            // Normalize the row by the center magnitude so boundary-shortened
            // legs do not skew the residual scale.
            const double norm = 1.0 / std::abs(center);
            triplets.emplace_back(row, row, center * norm);
            for (int e = 0; e < n_entries; ++e) {
                const Entry& entry = entries[e];
                if (entry.node < 0) {
                    rhs[row] -= entry.coeff * entry.value * norm;
                } else {
                    triplets.emplace_back(row, unknown[static_cast<std::size_t>(entry.node)],
                                          entry.coeff * norm);
                }
            }
        }
    }

    Eigen::SparseMatrix<double> system(n_unknown, n_unknown);
    system.setFromTriplets(triplets.begin(), triplets.end());
    system.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> solver;
    solver.compute(system);
    if (solver.info() != Eigen::Success)
        throw NumericalError("solve_reference: sparse factorization failed");
    Vector solution = solver.solve(rhs);

    const double scale = rhs.cwiseAbs().maxCoeff() + 1.0;
    for (int refine = 0; refine < 2; ++refine) {
        const Vector residual = rhs - system * solution;
        if (residual.cwiseAbs().maxCoeff() <= 1e-10 * scale) break;
        solution += solver.solve(residual);
    }
    if ((rhs - system * solution).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw NumericalError("solve_reference: residual above tolerance");

    for (Index i = 0; i < nu; ++i)
        for (Index j = 0; j < nv; ++j) {
            const Index row = unknown[static_cast<std::size_t>(i * nv + j)];
            if (row >= 0) field.values(i, j) = std::min(1.0, std::max(0.0, solution[row]));
        }
    return field;
}

struct McOptions {
    Index n_traj = 10000;
    double dt = 1e-4;
    Index max_steps = 10000000;  // trajectories hitting the cap are excluded
};

struct McResult {
    double estimate = 0.0;
    Index hit_b = 0;
    Index completed = 0;
    Index capped = 0;
};

// Fraction of independent trajectories from x0 that reach B before A.
// Accepts the 2-d planar system or the full 10-d system.
inline McResult mc_committor(const Vector& x0, const RegionSpec& regions, double beta,
                             const McOptions& options, std::uint64_t seed) {
    if (x0.size() != 2 && x0.size() != TripleWell10::kDim)
        throw InvalidArgumentError("mc_committor: start point must be 2- or 10-dimensional");
    if (regions.classify(x0) != Region::Omega)
        throw InvalidArgumentError("mc_committor: start point must lie in Omega");
    if (options.n_traj < 1) throw InvalidArgumentError("mc_committor: need at least one trajectory");

    std::vector<std::uint8_t> outcome(static_cast<std::size_t>(options.n_traj));  // 0 = A, 1 = B, 2 = capped
    auto run_one = [&](auto pot, Index t) {
        Rng rng(derive_seed(seed, 3, static_cast<std::uint64_t>(t)));
        Vector x = x0;
        Vector noise(x.size());
        for (Index step = 0; step < options.max_steps; ++step) {
            rng.gaussian_fill(std::span<double>(noise.data(), static_cast<std::size_t>(noise.size())));
            x = em_step(pot, x, options.dt, beta, noise);
            if (!x.allFinite()) throw SimulationBlowupError("mc_committor: state became non-finite", step);
            if (regions.in_a(x)) return std::uint8_t{0};
            if (regions.in_b(x)) return std::uint8_t{1};
        }
        return std::uint8_t{2};
    };
    if (x0.size() == 2) {
        parallel_for(options.n_traj, [&](Index t) { outcome[static_cast<std::size_t>(t)] = run_one(ThreeHole2{}, t); });
    } else {
        parallel_for(options.n_traj, [&](Index t) { outcome[static_cast<std::size_t>(t)] = run_one(TripleWell10{}, t); });
    }

    McResult res;
    for (const auto o : outcome) {
        if (o == 2)
            ++res.capped;
        else {
            ++res.completed;
            if (o == 1) ++res.hit_b;
        }
    }
    if (res.completed == 0)
        throw NonConvergenceError("mc_committor: all trajectories hit the step cap");
    res.estimate = static_cast<double>(res.hit_b) / static_cast<double>(res.completed);
    return res;
}

struct MseResult {
    double weighted = 0.0;
    double unweighted = 0.0;
    Index used = 0;
    Index excluded = 0;  // Omega start points whose projection left the grid
};

// Weighted and unweighted mean of (q(x_n) - q*(x_n))^2 over Omega start
// points, weights normalized to sum one; the reference is interpolated at
// the (coordinate 1, coordinate 2) projection.
template <class Evaluator>
MseResult evaluate_mse_with(Evaluator&& q, const TrajectoryDataset& data, const ReferenceField& field) {
    if (data.dim < 2) throw InvalidArgumentError("evaluate_mse: dataset must have at least two coordinates");
    MseResult res;
    double w_sum = 0.0, w_err = 0.0, err = 0.0;
    for (Index i = 0; i < data.count; ++i) {
        if (data.x_region[static_cast<std::size_t>(i)] != Region::Omega) continue;
        const double u = data.x(i, 0), v = data.x(i, 1);
        if (!field.contains(u, v)) {
            ++res.excluded;
            continue;
        }
        const double diff = q(data.x.row(i).transpose(), Region::Omega) - field.interpolate(u, v);
        const double sq = diff * diff;
        w_sum += data.w[i];
        w_err += data.w[i] * sq;
        err += sq;
        ++res.used;
    }
    if (res.used == 0) throw DegenerateDataError("evaluate_mse: no usable Omega start points");
    res.weighted = w_err / w_sum;
    res.unweighted = err / static_cast<double>(res.used);
    return res;
}

inline MseResult evaluate_mse(const FcmModel& model, const TrajectoryDataset& data,
                              const ReferenceField& field) {
    if (data.dim < 2) throw InvalidArgumentError("evaluate_mse: dataset must have at least two coordinates");
    MseResult res;
    std::vector<Index> rows;
    for (Index i = 0; i < data.count; ++i) {
        if (data.x_region[static_cast<std::size_t>(i)] != Region::Omega) continue;
        if (!field.contains(data.x(i, 0), data.x(i, 1))) {
            ++res.excluded;
            continue;
        }
        rows.push_back(i);
    }
    if (rows.empty()) throw DegenerateDataError("evaluate_mse: no usable Omega start points");

    Matrix points(static_cast<Index>(rows.size()), data.dim);
    for (Index i = 0; i < points.rows(); ++i) points.row(i) = data.x.row(rows[static_cast<std::size_t>(i)]);
    const BatchEvaluator evaluator(model);
    const Vector q = evaluator.values(points, std::vector<Region>(rows.size(), Region::Omega));

    double w_sum = 0.0, w_err = 0.0, err = 0.0;
    for (Index i = 0; i < points.rows(); ++i) {
        const Index row = rows[static_cast<std::size_t>(i)];
        const double diff = q[i] - field.interpolate(data.x(row, 0), data.x(row, 1));
        w_sum += data.w[row];
        w_err += data.w[row] * diff * diff;
        err += diff * diff;
    }
    res.used = points.rows();
    res.weighted = w_err / w_sum;
    res.unweighted = err / static_cast<double>(res.used);
    return res;
}

// File format: one header line with bounds/resolution, then nu lines of nv
// comma-separated values (row-major in the u index).
inline void write_reference(const ReferenceField& field, const std::string& path,
                            const std::vector<std::pair<std::string, std::string>>& extra = {}) {
    auto out = open_output(path);
    out << "u_min=" << format_double(field.u_min) << ",u_max=" << format_double(field.u_max)
        << ",v_min=" << format_double(field.v_min) << ",v_max=" << format_double(field.v_max)
        << ",nu=" << field.nu << ",nv=" << field.nv << ",version=" << kArtifactVersion;
    for (const auto& [k, v] : extra) out << ',' << k << '=' << v;
    out << '\n';
    for (Index i = 0; i < field.nu; ++i) {
        for (Index j = 0; j < field.nv; ++j) out << (j == 0 ? "" : ",") << format_double(field.values(i, j));
        out << '\n';
    }
    if (!out) throw IoError("failed writing reference field: " + path);
}

inline ReferenceField read_reference(const std::string& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("reference file is empty: " + path);
    const auto header = parse_header(line);
    ReferenceField field{parse_double(header_value(header, "u_min")),
                         parse_double(header_value(header, "u_max")),
                         parse_double(header_value(header, "v_min")),
                         parse_double(header_value(header, "v_max")),
                         parse_int(header_value(header, "nu")),
                         parse_int(header_value(header, "nv")),
                         {},
                         {}};
    if (field.nu < 2 || field.nv < 2) throw IoError("reference header has invalid resolution: " + path);
    field.values.resize(field.nu, field.nv);
    for (Index i = 0; i < field.nu; ++i) {
        if (!std::getline(in, line)) throw IoError("reference field truncated: " + path);
        const auto fields = split_view(line, ',');
        if (static_cast<Index>(fields.size()) != field.nv) throw IoError("reference row malformed: " + path);
        for (Index j = 0; j < field.nv; ++j) field.values(i, j) = parse_double(fields[static_cast<std::size_t>(j)]);
    }
    return field;
}

}  // namespace fcm
