// Command-line surface for adapter merging: synth | merge | bound | analyze.
//
// Exit codes: 0 success, 1 runtime/domain failure, 2 configuration,
// 3 file IO, 4 shape mismatch, 5 singular system.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "iteris/graph_json.hpp"
#include "iteris/harness.hpp"
#include "iteris/manifest.hpp"
#include "iteris/merging.hpp"
#include "iteris/model_io.hpp"
#include "iteris/report_io.hpp"

namespace {

namespace fs = std::filesystem;

int log_level() {
    const char* env = std::getenv("ITERIS_LOG");
    if (!env) return 0;
    return std::atoi(env);
}

void info(const std::string& message) {
    if (log_level() >= 1) std::cerr << "[iteris] " << message << "\n";
}

void debug(const std::string& message) {
    if (log_level() >= 2) std::cerr << "[iteris] " << message << "\n";
}

struct MergeFlags {
    std::string method;
    double alpha = -1.0;
    long long max_iter = -1;
    double tol = -1.0;
    std::string weights;
    std::string scope;
    double regmean_offdiag = -1.0;
    std::string out;
    std::string report;
    long long seed = -1;
    std::size_t refactor_rank = 0;
    bool f32 = false;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--method", method, "linear | regmean | iteris");
        cmd->add_option("--alpha", alpha, "relative ridge coefficient");
        cmd->add_option("--max-iter", max_iter, "iteration cap");
        cmd->add_option("--tol", tol, "relative adapter-change stopping tolerance");
        cmd->add_option("--weights", weights, "adaptive | uniform");
        cmd->add_option("--scope", scope, "delta | full");
        cmd->add_option("--regmean-offdiag", regmean_offdiag,
                        "off-diagonal Gram damping in (0, 1]");
        cmd->add_option("--out", out, "merged bundle path (overrides manifest)");
        cmd->add_option("--report", report, "report JSON path (overrides manifest)");
        cmd->add_option("--seed", seed, "seed recorded in the resolved config");
        cmd->add_option("--rank", refactor_rank,
                        "refactor merged deltas to this rank (0 = keep dense)");
        cmd->add_flag("--f32", f32, "write merged tensors as f32 instead of f64");
    }

    void apply(iteris::MergeConfig& config) const {
        if (!method.empty()) config.method = iteris::detail::method_from_name(method);
        if (alpha >= 0.0) config.alpha = alpha;
        if (max_iter >= 0) config.max_iterations = static_cast<std::size_t>(max_iter);
        if (tol >= 0.0) config.convergence_tolerance = tol;
        if (!weights.empty()) {
            if (weights == "adaptive")
                config.weight_mode = iteris::WeightMode::Adaptive;
            else if (weights == "uniform")
                config.weight_mode = iteris::WeightMode::Uniform;
            else
                throw iteris::ConfigError("--weights must be adaptive or uniform");
        }
        if (!scope.empty()) {
            if (scope == "delta")
                config.weight_scope = iteris::WeightScope::Delta;
            else if (scope == "full")
                config.weight_scope = iteris::WeightScope::Full;
            else
                throw iteris::ConfigError("--scope must be delta or full");
        }
        if (regmean_offdiag >= 0.0) config.regmean_offdiagonal_scale = regmean_offdiag;
        if (seed >= 0) config.seed = static_cast<std::uint64_t>(seed);
    }
};

int run_synth(const std::string& spec_path, const std::string& out_dir) {
    const iteris::SynthSpec spec = iteris::load_synth_spec(spec_path);
    const iteris::SynthInstance inst = iteris::synth_instance(spec);
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    iteris::save_graph(inst.base.graph, dir / "graph.json");
    iteris::base_to_bundle(inst.base).save(dir / "base.bundle");

    iteris::RunManifest manifest;
    manifest.graph = "graph.json";
    manifest.base = "base.bundle";
    for (std::size_t n = 0; n < spec.tasks; ++n) {
        const std::string adapters = "task" + std::to_string(n) + ".adapters.bundle";
        const std::string samples = "task" + std::to_string(n) + ".samples.bundle";
        iteris::adapter_set_to_bundle(inst.adapter_sets[n], inst.base.graph)
            .save(dir / adapters);
        iteris::samples_to_bundle(inst.task_inputs[n], &inst.holdout_inputs[n], n)
            .save(dir / samples);
        manifest.adapters.push_back(adapters);
        manifest.samples.push_back(samples);
    }
    manifest.config.seed = spec.seed;
    iteris::save_run_manifest(manifest, dir / "manifest.json");
    info("wrote synthetic instance with " + std::to_string(spec.tasks) + " tasks to " +
         out_dir);
    return 0;
}

int run_merge(const std::string& manifest_path, const MergeFlags& flags) {
    iteris::RunManifest manifest = iteris::load_run_manifest(manifest_path);
    flags.apply(manifest.config);
    if (!flags.out.empty()) manifest.merged_out = flags.out;
    if (!flags.report.empty()) manifest.report_out = flags.report;
    manifest.check();

    const iteris::LoadedRun run = iteris::load_run(manifest);
    debug("loaded " + std::to_string(run.task_models.size()) + " task models");
    auto [merged, report] =
        iteris::merge_models(run.task_models, run.base, run.task_inputs, manifest.config);

    iteris::TensorBundle out_bundle =
        iteris::merged_to_bundle(merged, manifest.config, flags.refactor_rank);
    if (flags.f32)
        for (auto& [name, entry] : out_bundle.tensors) entry.dtype = iteris::Dtype::F32;
    out_bundle.save(manifest.merged_out);
    iteris::save_report(report, manifest.report_out);

    info("merged " + std::to_string(report.tasks) + " tasks over " +
         std::to_string(report.site_ids.size()) + " sites in " +
         std::to_string(report.iterations.size()) + " iteration(s)" +
         (report.converged_at
              ? ", converged at iteration " + std::to_string(*report.converged_at)
              : ""));
    return 0;
}

int run_bound(const std::string& graph_path) {
    const iteris::ModelGraph graph = iteris::load_graph(graph_path);
    iteris::validate(graph);
    std::cout << iteris::iteration_bound(graph) << "\n";
    return 0;
}

int run_analyze(const std::string& manifest_path, const std::string& merged_path,
                const std::string& out_dir, const std::string& ablate_axis,
                const std::string& grid_csv, const std::string& synth_spec_path,
                const std::string& compare_csv_list, std::size_t seeds) {
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    if (!ablate_axis.empty() || !compare_csv_list.empty()) {
        if (synth_spec_path.empty())
            throw iteris::ConfigError("--ablate/--compare need --spec <synth-spec.json>");
        const iteris::SynthSpec spec = iteris::load_synth_spec(synth_spec_path);
        if (!ablate_axis.empty()) {
            iteris::AblationAxis axis;
            if (ablate_axis == "max_iterations")
                axis = iteris::AblationAxis::MaxIterations;
            else if (ablate_axis == "alpha")
                axis = iteris::AblationAxis::Alpha;
            else if (ablate_axis == "adaptive_weights")
                axis = iteris::AblationAxis::AdaptiveWeights;
            else
                throw iteris::ConfigError("--ablate must be max_iterations, alpha or "
                                          "adaptive_weights");
            std::vector<double> grid;
            std::stringstream ss(grid_csv);
            std::string item;
            while (std::getline(ss, item, ',')) grid.push_back(std::stod(item));
            if (grid.empty()) throw iteris::ConfigError("--grid lists no values");
            const auto table = iteris::ablation_sweep(spec, axis, grid);
            iteris::detail::atomic_write(dir / "ablation.csv",
                                         iteris::ablation_csv(axis, table));
            info("wrote ablation.csv with " + std::to_string(table.size()) + " grid points");
        }
        if (!compare_csv_list.empty()) {
            std::vector<iteris::MergeMethod> methods;
            std::stringstream ss(compare_csv_list);
            std::string item;
            while (std::getline(ss, item, ','))
                methods.push_back(iteris::detail::method_from_name(item));
            const auto result = iteris::compare_methods(spec, methods, seeds);
            iteris::detail::atomic_write(dir / "compare.json",
                                         iteris::comparison_to_json(result).dump(2) + "\n");
            iteris::detail::atomic_write(dir / "compare.csv", iteris::comparison_csv(result));
            info("wrote compare.json / compare.csv over " + std::to_string(seeds) + " seeds");
        }
        return 0;
    }

    // plain mode: diagnostics of an existing merged bundle against its inputs
    const iteris::RunManifest manifest = iteris::load_run_manifest(manifest_path);
    const iteris::LoadedRun run = iteris::load_run(manifest);
    const iteris::ModelInstance merged =
        iteris::merged_from_bundle(iteris::TensorBundle::load(merged_path), run.base);

    const auto site_table = iteris::sites(run.graph);
    const auto curve = iteris::discrepancy_curve(run.task_models, merged, run.task_inputs);

    // per-site lambda, balance shares, alignment errors and objective under
    // the manifest's configuration
    const std::size_t tasks = run.task_models.size();
    std::vector<std::vector<double>> lambda(site_table.size(),
                                            std::vector<double>(tasks, 1.0));
    std::vector<std::vector<double>> shares;
    std::vector<std::vector<double>> alignment(site_table.size(),
                                               std::vector<double>(tasks, 0.0));
    std::vector<double> objective(site_table.size(), 0.0);

    std::vector<std::vector<iteris::Matrix>> x(site_table.size());
    std::vector<std::vector<iteris::Matrix>> xt(site_table.size());
    std::vector<std::vector<iteris::Matrix>> w(site_table.size());
    for (std::size_t n = 0; n < tasks; ++n) {
        auto xf = iteris::capture_features(run.task_models[n], {run.task_inputs[n]});
        auto xtf = iteris::capture_features(merged, {run.task_inputs[n]});
        for (std::size_t j = 0; j < site_table.size(); ++j) {
            x[j].push_back(std::move(xf[0][j].features));
            xt[j].push_back(std::move(xtf[0][j].features));
            iteris::Matrix wj = run.task_models[n].adapters.at(j);
            if (manifest.config.weight_scope == iteris::WeightScope::Full)
                wj += run.base.parameters.at(site_table[j].weight);
            w[j].push_back(std::move(wj));
        }
    }
    for (std::size_t j = 0; j < site_table.size(); ++j) {
        if (manifest.config.weight_mode == iteris::WeightMode::Adaptive)
            for (std::size_t n = 0; n < tasks; ++n)
                lambda[j][n] = iteris::adaptive_weight(w[j][n], x[j][n]);
        shares.push_back(tasks >= 2 ? iteris::balance_shares(w[j], x[j], lambda[j])
                                    : std::vector<double>{1.0});
        iteris::Matrix merged_w = merged.adapters.at(j);
        if (manifest.config.weight_scope == iteris::WeightScope::Full)
            merged_w += run.base.parameters.at(site_table[j].weight);
        objective[j] = iteris::objective_value(merged_w, w[j], x[j], xt[j], lambda[j]);
        for (std::size_t n = 0; n < tasks; ++n)
            alignment[j][n] = iteris::frobenius_norm(
                iteris::transpose_multiply(w[j][n], x[j][n]) -
                iteris::transpose_multiply(merged_w, xt[j][n]));
    }

    nlohmann::json analysis;
    analysis["schema_version"] = 1;
    analysis["config"] = iteris::config_to_json(manifest.config);
    analysis["tasks"] = tasks;
    nlohmann::json site_list = nlohmann::json::array();
    for (const auto& s : site_table)
        site_list.push_back({{"index", s.id.index}, {"label", s.id.label}});
    analysis["sites"] = site_list;
    analysis["discrepancy"] = curve;
    analysis["balance_shares"] = shares;
    analysis["lambda"] = lambda;
    analysis["alignment_error"] = alignment;
    analysis["objective_per_site"] = objective;
    if (!run.holdout_inputs.empty())
        analysis["holdout_alignment"] =
            iteris::holdout_alignment(run.task_models, merged, run.holdout_inputs,
                                      manifest.config.weight_scope);

    iteris::detail::atomic_write(dir / "analysis.json", analysis.dump(2) + "\n");

    std::string curve_csv = "site,site_label,task,discrepancy\n";
    std::string share_csv = "site,site_label,task,share,lambda\n";
    for (std::size_t j = 0; j < site_table.size(); ++j)
        for (std::size_t n = 0; n < tasks; ++n) {
            curve_csv += std::to_string(j) + "," +
                         iteris::detail::csv_quote(site_table[j].id.label) + "," +
                         std::to_string(n) + "," + iteris::detail::csv_number(curve[j][n]) +
                         "\n";
            share_csv += std::to_string(j) + "," +
                         iteris::detail::csv_quote(site_table[j].id.label) + "," +
                         std::to_string(n) + "," + iteris::detail::csv_number(shares[j][n]) +
                         "," + iteris::detail::csv_number(lambda[j][n]) + "\n";
        }
    iteris::detail::atomic_write(dir / "discrepancy.csv", curve_csv);
    iteris::detail::atomic_write(dir / "balance.csv", share_csv);
    info("wrote analysis.json, discrepancy.csv, balance.csv");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"gradient-free merging of task-specific low-rank adapters"};
    app.require_subcommand(1);

    std::string spec_path, out_dir = ".", manifest_path, graph_path, merged_path;
    std::string ablate_axis, grid_csv, synth_spec_path, compare_list;
    std::size_t seeds = 20;
    MergeFlags flags;

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic merge instance");
    synth->add_option("spec", spec_path, "synthetic spec JSON")->required();
    synth->add_option("outdir", out_dir, "output directory")->required();

    CLI::App* merge = app.add_subcommand("merge", "merge task adapters per a run manifest");
    merge->add_option("manifest", manifest_path, "run manifest JSON")->required();
    flags.add_to(merge);

    CLI::App* bound = app.add_subcommand("bound", "print the convergence iteration bound");
    bound->add_option("graph", graph_path, "graph JSON")->required();

    CLI::App* analyze = app.add_subcommand("analyze", "diagnostics, sweeps and comparisons");
    analyze->add_option("manifest", manifest_path, "run manifest JSON");
    analyze->add_option("merged", merged_path, "merged bundle to analyze");
    analyze->add_option("--outdir", out_dir, "directory for report files");
    analyze->add_option("--ablate", ablate_axis,
                        "max_iterations | alpha | adaptive_weights (needs --spec)");
    analyze->add_option("--grid", grid_csv, "comma-separated grid values for --ablate");
    analyze->add_option("--spec", synth_spec_path, "synth spec JSON for sweeps/comparisons");
    analyze->add_option("--compare", compare_list,
                        "comma-separated methods to compare (needs --spec)");
    analyze->add_option("--seeds", seeds, "seed count for --compare");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (synth->parsed()) return run_synth(spec_path, out_dir);
        if (merge->parsed()) return run_merge(manifest_path, flags);
        if (bound->parsed()) return run_bound(graph_path);
        if (analyze->parsed()) {
            if (ablate_axis.empty() && compare_list.empty() &&
                (manifest_path.empty() || merged_path.empty()))
                throw iteris::ConfigError(
                    "analyze needs <manifest> <merged>, or --ablate/--compare with --spec");
            return run_analyze(manifest_path, merged_path, out_dir, ablate_axis, grid_csv,
                               synth_spec_path, compare_list, seeds);
        }
    } catch (const iteris::ConfigError& e) {
        std::cerr << "error (config): " << e.what() << "\n";
        return 2;
    } catch (const iteris::IoError& e) {
        std::cerr << "error (io): " << e.what() << "\n";
        return 3;
    } catch (const iteris::ShapeError& e) {
        std::cerr << "error (shape): " << e.what() << "\n";
        return 4;
    } catch (const iteris::SingularError& e) {
        std::cerr << "error (singular): " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
