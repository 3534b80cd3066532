// Command-line front end: dataset generation, reference solving, fitting,
// grid search, benchmark sweeps, scaling-matrix inspection, and the
// appendix-style numerical verifications. Every output file embeds the
// resolved configuration, the seed, and the artifact version; re-running a
// subcommand with identical inputs reproduces the output bytes except for
// wall-time fields.

#include "fcm/dynamics.hpp"
#include "fcm/fit.hpp"
#include "fcm/parallel.hpp"
#include "fcm/reference.hpp"
#include "fcm/verify.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace fcm;

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumerical = 4;

struct RegionFlags {
    double a_center1 = -1.0, a_center2 = 0.0, a_radius = 0.3;
    double b_center1 = 1.0, b_center2 = 0.0, b_radius = 0.3;

    void attach(CLI::App* cmd) {
        cmd->add_option("--a-center1", a_center1, "A ball center, coordinate 1");
        cmd->add_option("--a-center2", a_center2, "A ball center, coordinate 2");
        cmd->add_option("--a-radius", a_radius, "A ball radius");
        cmd->add_option("--b-center1", b_center1, "B ball center, coordinate 1");
        cmd->add_option("--b-center2", b_center2, "B ball center, coordinate 2");
        cmd->add_option("--b-radius", b_radius, "B ball radius");
    }

    RegionSpec spec() const {
        return RegionSpec(BallPredicate{a_center1, a_center2, a_radius},
                          BallPredicate{b_center1, b_center2, b_radius});
    }

    std::string echo() const {
        std::ostringstream ss;
        ss << "A=ball(" << format_double(a_center1) << ';' << format_double(a_center2) << ';'
           << format_double(a_radius) << ") B=ball(" << format_double(b_center1) << ';'
           << format_double(b_center2) << ';' << format_double(b_radius) << ')';
        return ss.str();
    }
};

void write_config_comment(std::ofstream& out, const std::string& subcommand, std::uint64_t seed,
                          const std::vector<std::pair<std::string, std::string>>& config) {
    out << "# subcommand=" << subcommand << " seed=" << seed << " version=" << kArtifactVersion << '\n';
    out << "#";
    for (const auto& [k, v] : config) out << ' ' << k << '=' << v;
    out << '\n';
}

int cmd_generate(const std::string& out_path, const SimulationPlan& plan, const PotentialSpec& pot,
                 const RegionFlags& regions) {
    TrajectoryDataset data = generate_dataset(plan, pot, regions.spec());
    data.extra_header.emplace_back("seed", std::to_string(plan.seed));
    data.extra_header.emplace_back("dt", format_double(plan.dt));
    data.extra_header.emplace_back("spacing", format_double(plan.spacing));
    data.extra_header.emplace_back("burnin", std::to_string(plan.burn_in_steps));
    data.extra_header.emplace_back("potential", pot.name);
    data.extra_header.emplace_back("regions", regions.echo());
    data.extra_header.emplace_back("version", kArtifactVersion);
    write_dataset(data, out_path);
    std::cout << "wrote " << data.count << " pairs to " << out_path << '\n';
    return 0;
}

int cmd_reference(const std::string& out_path, const ReferenceGridParams& grid, double beta,
                  const RegionFlags& regions) {
    const ReferenceField field = solve_reference(regions.spec(), beta, grid);
    write_reference(field, out_path,
                    {{"beta", format_double(beta)}, {"regions", regions.echo()}, {"seed", "0"}});
    std::cout << "wrote " << field.nu << "x" << field.nv << " reference field to " << out_path << '\n';
    return 0;
}

void write_report_csv(const std::string& path, const FitReport& report, const FitOptions& options,
                      Index dim) {
    auto out = open_output(path);
    write_config_comment(out, "fit", options.seed,
                         {{"epsilon", format_double(options.bandwidth)},
                          {"gamma", format_double(options.regularization)},
                          {"rank", std::to_string(options.rank)}});
    out << "iteration,validation_loss,residual_trace,seconds";
    for (Index j = 0; j < dim; ++j) out << ",trace_fraction_" << (j + 1);
    out << '\n';
    for (std::size_t t = 0; t < report.iterations.size(); ++t) {
        const IterationRecord& rec = report.iterations[t];
        out << (t + 1) << ',' << format_double(rec.validation_loss) << ','
            << format_double(rec.residual_trace) << ',' << format_double(rec.seconds);
        for (Index j = 0; j < dim; ++j) out << ',' << format_double(rec.trace_fraction[j]);
        out << '\n';
    }
}

int cmd_fit(const std::string& data_path, const std::string& model_path, const std::string& report_path,
            const FitOptions& options, double val_fraction) {
    const TrajectoryDataset data = read_dataset(data_path);
    FitResult result = [&]() {
        if (val_fraction > 0.0) {
            Rng split_rng(derive_seed(options.seed, 0x59, 0));
            const auto [train, val] = split_train_validation(data, val_fraction, split_rng);
            return fit(train, options, &val);
        }
        return fit(data, options);
    }();
    write_model(result.model, model_path,
                {{"seed", std::to_string(options.seed)},
                 {"gamma", format_double(options.regularization)},
                 {"rank", std::to_string(options.rank)},
                 {"data", data_path}});
    if (!report_path.empty()) write_report_csv(report_path, result.report, options, data.dim);
    std::cout << "final loss " << format_double(result.report.iterations.back().validation_loss)
              << ", landmarks " << result.model.size() << ", model " << model_path << '\n';
    return 0;
}

int cmd_search(const std::string& data_path, const std::string& out_path,
               const std::vector<double>& epsilons, const std::vector<double>& gammas,
               const std::vector<Index>& ranks, std::uint64_t seed) {
    const TrajectoryDataset data = read_dataset(data_path);
    const GridSearchResult result = grid_search(data, epsilons, gammas, ranks, seed);
    auto out = open_output(out_path);
    write_config_comment(out, "search", seed, {{"data", data_path}});
    out << "epsilon,gamma,rank,validation_loss,status\n";
    for (const auto& cell : result.table)
        out << format_double(cell.bandwidth) << ',' << format_double(cell.regularization) << ','
            << cell.rank << ',' << format_double(cell.validation_loss) << ','
            << (cell.failed ? "failed" : "ok") << '\n';
    std::cout << "best epsilon=" << format_double(result.bandwidth)
              << " gamma=" << format_double(result.regularization) << " rank=" << result.rank
              << " validation_loss=" << format_double(result.validation_loss) << '\n';
    return 0;
}

int cmd_benchmark(const std::string& data_path, const std::string& reference_path,
                  const std::string& out_path, const std::string& traces_path,
                  const std::vector<Index>& sweep, Index repetitions, const FitOptions& base,
                  std::uint64_t seed) {
    const TrajectoryDataset master = read_dataset(data_path);
    const ReferenceField field = read_reference(reference_path);

    auto out = open_output(out_path);
    write_config_comment(out, "benchmark", seed,
                         {{"data", data_path},
                          {"reference", reference_path},
                          {"epsilon", format_double(base.bandwidth)},
                          {"gamma", format_double(base.regularization)},
                          {"rank", std::to_string(base.rank)},
                          {"reps", std::to_string(repetitions)}});
    out << "N,repetition,mse_weighted,mse_unweighted,fit_seconds,residual_trace\n";

    std::ofstream traces;
    if (!traces_path.empty()) {
        traces = open_output(traces_path);
        write_config_comment(traces, "benchmark", seed, {{"data", data_path}});
        traces << "N,repetition,iteration,validation_loss,residual_trace,seconds\n";
    }

    for (const Index n : sweep) {
        for (Index rep = 0; rep < repetitions; ++rep) {
            Rng sub_rng(derive_seed(seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(rep)));
            const TrajectoryDataset sample = subsample(master, n, sub_rng);
            Rng split_rng(derive_seed(seed, static_cast<std::uint64_t>(n), 1000 + static_cast<std::uint64_t>(rep)));
            const auto [train, val] = split_train_validation(sample, 0.2, split_rng);

            FitOptions options = base;
            options.seed = derive_seed(seed, 2000 + static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(rep));
            const auto started = std::chrono::steady_clock::now();
            const FitResult result = fit(train, options, &val);
            const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

            const MseResult mse = evaluate_mse(result.model, val, field);
            out << n << ',' << rep << ',' << format_double(mse.weighted) << ','
                << format_double(mse.unweighted) << ',' << format_double(seconds) << ','
                << format_double(result.report.iterations.back().residual_trace) << '\n';
            if (traces.is_open()) {
                for (std::size_t t = 0; t < result.report.iterations.size(); ++t) {
                    const IterationRecord& rec = result.report.iterations[t];
                    traces << n << ',' << rep << ',' << (t + 1) << ','
                           << format_double(rec.validation_loss) << ','
                           << format_double(rec.residual_trace) << ',' << format_double(rec.seconds)
                           << '\n';
                }
            }
        }
    }
    std::cout << "benchmark rows: " << sweep.size() * static_cast<std::size_t>(repetitions) << '\n';
    return 0;
}

int cmd_inspect_scaling(const std::string& model_path, const std::string& out_path) {
    const FcmModel model = read_model(model_path);
    const Matrix& m = model.spec().scaling.entries();
    const Matrix& root = model.spec().scaling.sqrt_entries();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(root);
    if (eig.info() != Eigen::Success) throw NumericalError("inspect-scaling: eigendecomposition failed");

    auto out = open_output(out_path);
    write_config_comment(out, "inspect-scaling", 0, {{"model", model_path}});
    out << "kind,i,j,value\n";
    const Index d = model.dim();
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) out << "sqrt_m," << i << ',' << j << ',' << format_double(root(i, j)) << '\n';
    for (Index i = 0; i < d; ++i) out << "eigenvalue," << i << ",," << format_double(eig.eigenvalues()[i]) << '\n';
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j)
            out << "eigenvector," << i << ',' << j << ',' << format_double(eig.eigenvectors()(j, i)) << '\n';
    const double trace = m.trace();
    for (Index i = 0; i < d; ++i) out << "trace_fraction," << i << ",," << format_double(m(i, i) / trace) << '\n';
    std::cout << "wrote scaling inspection to " << out_path << '\n';
    return 0;
}

int cmd_verify(Index instances, Index max_pairs, std::uint64_t seed) {
    int failures = 0;
    auto report = [&](const char* name, bool pass, const std::string& detail) {
        std::cout << (pass ? "[PASS] " : "[FAIL] ") << name << ": " << detail << '\n';
        if (!pass) ++failures;
    };

    // minimizer structure of the full two-block system
    double worst_cd = 0.0, worst_q = 0.0;
    const RegionSpec far(BallPredicate{-50.0, 0.0, 0.2}, BallPredicate{50.0, 0.0, 0.2});
    for (Index inst = 0; inst < instances; ++inst) {
        Rng rng(derive_seed(seed, 10, static_cast<std::uint64_t>(inst)));
        const Index n = 10 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(max_pairs - 9)));
        Matrix x(n, 3), y(n, 3);
        Vector w(n);
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < 3; ++j) {
                x(i, j) = 2.0 * rng.uniform() - 1.0;
                y(i, j) = 2.0 * rng.uniform() - 1.0;
            }
            w[i] = 0.5 + 1.5 * rng.uniform();
        }
        TrajectoryDataset data = make_dataset(std::move(x), std::move(y), std::move(w), far, 0.01);
        data.y_region[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n)))] = Region::B;
        const double gamma = inst % 2 == 0 ? 1e-6 : 1e-2;
        const FullSystemInstance instance =
            make_full_system(std::move(data), KernelSpec(1.0, ScalingMatrix::identity(3)), gamma);
        const FullSolveResult res = solve_full_system(instance);
        worst_cd = std::max(worst_cd, (res.c + res.d).cwiseAbs().maxCoeff() /
                                          (1.0 + res.c.cwiseAbs().maxCoeff()));
        for (int probe = 0; probe < 20; ++probe) {
            Vector p(3);
            for (Index j = 0; j < 3; ++j) p[j] = 2.0 * rng.uniform() - 1.0;
            double q_theta = 0.0;
            for (Index i = 0; i < instance.data.count; ++i)
                q_theta +=
                    res.c[i] * std::sqrt(instance.data.w[i]) *
                    (kernel_eval(instance.data.x.row(i).transpose(),
                                 instance.data.x_region[static_cast<std::size_t>(i)], p, Region::Omega,
                                 instance.spec) -
                     kernel_eval(instance.data.y.row(i).transpose(),
                                 instance.data.y_region[static_cast<std::size_t>(i)], p, Region::Omega,
                                 instance.spec));
            worst_q = std::max(worst_q, std::abs(evaluate_q_cd(instance, res.c, res.d, p, Region::Omega) - q_theta));
        }
    }
    report("coefficient structure c + d = 0", worst_cd <= 1e-8,
           "max |c+d|_inf / (1 + |c|_inf) = " + format_double(worst_cd));
    report("reduced parametrization q_{c,d} = q_{theta=c}", worst_q <= 1e-8,
           "max evaluation gap = " + format_double(worst_q));

    // gradient isotropy after whitening
    Rng rng(derive_seed(seed, 20, 0));
    Matrix gradients(200, 4);
    for (Index i = 0; i < gradients.rows(); ++i)
        for (Index j = 0; j < gradients.cols(); ++j) gradients(i, j) = 2.0 * rng.uniform() - 1.0;
    const IsotropyResult iso = isotropy_check(gradients);
    report("whitened gradients are isotropic", iso.deviation <= 1e-10,
           "deviation = " + format_double(iso.deviation));

    bool raised = false;
    try {
        Matrix parallel(50, 2);
        for (Index i = 0; i < parallel.rows(); ++i) {
            parallel(i, 0) = 1.0 + rng.uniform();
            parallel(i, 1) = 2.0 * parallel(i, 0);
        }
        (void)isotropy_check(parallel);
    } catch (const RankDeficientError&) {
        raised = true;
    }
    report("parallel gradients are rejected", raised, raised ? "rank-deficient error raised" : "no error raised");

    return failures == 0 ? 0 : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fast committor machine toolkit"};
    app.set_config("--config", "", "key=value configuration file");
    int threads = 0;
    app.add_option("--threads", threads, "cap on worker threads (default: hardware)");

    // generate
    auto* generate = app.add_subcommand("generate", "simulate the triple-well dataset");
    std::string gen_out;
    SimulationPlan plan;
    plan.count = 1000;
    PotentialSpec pot;
    RegionFlags gen_regions;
    generate->add_option("--out", gen_out, "output dataset file")->required();
    generate->add_option("--count", plan.count, "number of pairs");
    generate->add_option("--dt", plan.dt, "integrator step size");
    generate->add_option("--tau", plan.lag, "lag time");
    generate->add_option("--spacing", plan.spacing, "time between stored start points");
    generate->add_option("--burnin-steps", plan.burn_in_steps, "burn-in steps before sampling");
    generate->add_option("--seed", plan.seed, "master seed");
    generate->add_option("--beta", pot.beta, "target inverse temperature");
    generate->add_option("--beta-s", pot.beta_s, "sampling inverse temperature");
    generate->add_option("--potential", pot.name, "potential name");
    gen_regions.attach(generate);

    // reference
    auto* reference = app.add_subcommand("reference", "solve the planar committor equation");
    std::string ref_out;
    ReferenceGridParams grid;
    double ref_beta = 2.0;
    RegionFlags ref_regions;
    reference->add_option("--out", ref_out, "output field file")->required();
    reference->add_option("--beta", ref_beta, "inverse temperature");
    reference->add_option("--u-min", grid.u_min, "grid lower bound, coordinate 1");
    reference->add_option("--u-max", grid.u_max, "grid upper bound, coordinate 1");
    reference->add_option("--v-min", grid.v_min, "grid lower bound, coordinate 2");
    reference->add_option("--v-max", grid.v_max, "grid upper bound, coordinate 2");
    reference->add_option("--nu", grid.nu, "grid nodes, coordinate 1");
    reference->add_option("--nv", grid.nv, "grid nodes, coordinate 2");
    ref_regions.attach(reference);

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "train a committor model on a dataset");
    std::string fit_data, fit_model, fit_report;
    FitOptions fit_options;
    double val_fraction = 0.0;
    fit_cmd->add_option("--data", fit_data, "input dataset")->required();
    fit_cmd->add_option("--out", fit_model, "output model file")->required();
    fit_cmd->add_option("--report", fit_report, "per-iteration report CSV");
    fit_cmd->add_option("--epsilon", fit_options.bandwidth, "kernel bandwidth");
    fit_cmd->add_option("--gamma", fit_options.regularization, "ridge regularization");
    fit_cmd->add_option("--rank", fit_options.rank, "approximation rank (multiple of 10)");
    fit_cmd->add_option("--seed", fit_options.seed, "fit seed");
    fit_cmd->add_option("--val-fraction", val_fraction, "hold out this share for the loss report");

    // search
    auto* search = app.add_subcommand("search", "hyperparameter grid search");
    std::string search_data, search_out;
    std::vector<double> epsilons{0.5, 1.0, 2.0};
    std::vector<double> gammas{1e-6};
    std::vector<Index> ranks{100};
    std::uint64_t search_seed = 0;
    search->add_option("--data", search_data, "input dataset")->required();
    search->add_option("--out", search_out, "output table CSV")->required();
    search->add_option("--epsilons", epsilons, "bandwidth grid")->delimiter(',');
    search->add_option("--gammas", gammas, "regularization grid")->delimiter(',');
    search->add_option("--ranks", ranks, "rank grid")->delimiter(',');
    search->add_option("--seed", search_seed, "search seed");

    // benchmark
    auto* benchmark = app.add_subcommand("benchmark", "accuracy/runtime sweep against a reference field");
    std::string bench_data, bench_reference, bench_out, bench_traces;
    std::vector<Index> sweep{1000, 10000};
    Index repetitions = 3;
    FitOptions bench_options;
    bench_options.rank = 500;
    std::uint64_t bench_seed = 0;
    benchmark->add_option("--data", bench_data, "master dataset")->required();
    benchmark->add_option("--reference", bench_reference, "reference field file")->required();
    benchmark->add_option("--out", bench_out, "output CSV")->required();
    benchmark->add_option("--traces-out", bench_traces, "per-iteration trace CSV");
    benchmark->add_option("--sweep", sweep, "dataset sizes")->delimiter(',');
    benchmark->add_option("--reps", repetitions, "repetitions per size");
    benchmark->add_option("--epsilon", bench_options.bandwidth, "kernel bandwidth");
    benchmark->add_option("--gamma", bench_options.regularization, "ridge regularization");
    benchmark->add_option("--rank", bench_options.rank, "approximation rank");
    benchmark->add_option("--seed", bench_seed, "benchmark seed");

    // inspect-scaling
    auto* inspect = app.add_subcommand("inspect-scaling", "emit the scaling matrix of a model");
    std::string inspect_model, inspect_out;
    inspect->add_option("--model", inspect_model, "model file")->required();
    inspect->add_option("--out", inspect_out, "output CSV")->required();

    // verify
    auto* verify = app.add_subcommand("verify", "numerical verification of the coefficient structure");
    Index verify_instances = 20;
    Index verify_pairs = 50;
    std::uint64_t verify_seed = 0;
    verify->add_option("--instances", verify_instances, "number of random instances");
    verify->add_option("--max-pairs", verify_pairs, "largest instance size (<= 100)");
    verify->add_option("--seed", verify_seed, "verification seed");

    app.require_subcommand(1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    if (threads > 0) set_worker_count(threads);

    try {
        if (*generate) return cmd_generate(gen_out, plan, pot, gen_regions);
        if (*reference) return cmd_reference(ref_out, grid, ref_beta, ref_regions);
        if (*fit_cmd) return cmd_fit(fit_data, fit_model, fit_report, fit_options, val_fraction);
        if (*search) return cmd_search(search_data, search_out, epsilons, gammas, ranks, search_seed);
        if (*benchmark)
            return cmd_benchmark(bench_data, bench_reference, bench_out, bench_traces, sweep, repetitions,
                                 bench_options, bench_seed);
        if (*inspect) return cmd_inspect_scaling(inspect_model, inspect_out);
        if (*verify) return cmd_verify(verify_instances, verify_pairs, verify_seed);
    } catch (const InvalidArgumentError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return kExitIo;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
