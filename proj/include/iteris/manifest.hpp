#pragma once

// JSON forms of MergeConfig, SynthSpec and the run manifest that ties a
// merge invocation together. Relative paths inside a manifest resolve
// against the manifest file's directory.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "iteris/bundle.hpp"
#include "iteris/errors.hpp"
#include "iteris/graph_json.hpp"
#include "iteris/harness.hpp"
#include "iteris/merging.hpp"

namespace iteris {

namespace detail {

inline const char* method_name(MergeMethod m) {
    switch (m) {
        case MergeMethod::Linear: return "linear";
        case MergeMethod::RegMean: return "regmean";
        case MergeMethod::IterIS: return "iteris";
    }
    return "?";
}

inline MergeMethod method_from_name(const std::string& name) {
    if (name == "linear") return MergeMethod::Linear;
    if (name == "regmean") return MergeMethod::RegMean;
    if (name == "iteris") return MergeMethod::IterIS;
    throw ConfigError("unknown merge method '" + name + "'");
}

} // namespace detail

inline nlohmann::json config_to_json(const MergeConfig& c) {
    nlohmann::json j;
    j["method"] = detail::method_name(c.method);
    j["alpha"] = c.alpha;
    j["max_iterations"] = c.max_iterations;
    j["convergence_tolerance"] = c.convergence_tolerance;
    j["weight_mode"] = c.weight_mode == WeightMode::Adaptive ? "adaptive" : "uniform";
    j["weight_scope"] = c.weight_scope == WeightScope::Delta ? "delta" : "full";
    j["regmean_offdiagonal_scale"] = c.regmean_offdiagonal_scale;
    j["linear_weights"] = c.linear_weights ? nlohmann::json(*c.linear_weights)
                                           : nlohmann::json(nullptr);
    j["seed"] = c.seed;
    return j;
}

inline MergeConfig config_from_json(const nlohmann::json& j) {
    MergeConfig c;
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    if (j.contains("method")) c.method = detail::method_from_name(j["method"].get<std::string>());
    c.alpha = j.value("alpha", c.alpha);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.convergence_tolerance = j.value("convergence_tolerance", c.convergence_tolerance);
    if (j.contains("weight_mode")) {
        const std::string mode = j["weight_mode"].get<std::string>();
        if (mode == "adaptive")
            c.weight_mode = WeightMode::Adaptive;
        else if (mode == "uniform")
            c.weight_mode = WeightMode::Uniform;
        else
            throw ConfigError("unknown weight_mode '" + mode + "'");
    }
    if (j.contains("weight_scope")) {
        const std::string scope = j["weight_scope"].get<std::string>();
        if (scope == "delta")
            c.weight_scope = WeightScope::Delta;
        else if (scope == "full")
            c.weight_scope = WeightScope::Full;
        else
            throw ConfigError("unknown weight_scope '" + scope + "'");
    }
    c.regmean_offdiagonal_scale = j.value("regmean_offdiagonal_scale",
                                          c.regmean_offdiagonal_scale);
    if (j.contains("linear_weights") && !j["linear_weights"].is_null())
        c.linear_weights = j["linear_weights"].get<std::vector<double>>();
    c.seed = j.value("seed", c.seed);
    return c;
}

inline nlohmann::json synth_spec_to_json(const SynthSpec& s) {
    nlohmann::json arch;
    arch["kind"] = s.architecture.kind == ArchitectureKind::MlpChain ? "mlp_chain"
                                                                     : "attention_stack";
    arch["depth"] = s.architecture.depth;
    arch["heads"] = s.architecture.heads;
    arch["width"] = s.architecture.width;
    arch["activation"] = detail::activation_name(s.architecture.activation);

    nlohmann::json dist;
    dist["family"] = s.distribution.family == InputFamily::Isotropic ? "isotropic"
                                                                     : "anisotropic";
    dist["condition"] = s.distribution.condition;
    dist["effective_rank"] = s.distribution.effective_rank;
    dist["mean_scale"] = s.distribution.mean_scale;
    if (!s.distribution.input_scales.empty()) dist["input_scales"] = s.distribution.input_scales;

    nlohmann::json j;
    j["architecture"] = arch;
    j["tasks"] = s.tasks;
    j["samples"] = s.samples;
    j["holdout_samples"] = s.holdout_samples;
    j["rank"] = s.rank;
    j["distribution"] = dist;
    j["adapter_mode"] =
        s.adapter_mode == AdapterMode::RandomLowRank ? "random_lowrank" : "target_fit";
    j["adapter_scale"] = s.adapter_scale;
    j["seed"] = s.seed;
    return j;
}

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) try {
    if (!j.is_object()) throw ConfigError("synth spec must be a JSON object");
    SynthSpec s;
    if (j.contains("architecture")) {
        const auto& arch = j["architecture"];
        const std::string kind = arch.value("kind", std::string("mlp_chain"));
        if (kind == "mlp_chain")
            s.architecture.kind = ArchitectureKind::MlpChain;
        else if (kind == "attention_stack")
            s.architecture.kind = ArchitectureKind::AttentionStack;
        else
            throw ConfigError("unknown architecture kind '" + kind + "'");
        s.architecture.depth = arch.value("depth", s.architecture.depth);
        s.architecture.heads = arch.value("heads", s.architecture.heads);
        s.architecture.width = arch.value("width", s.architecture.width);
        if (arch.contains("activation"))
            s.architecture.activation =
                detail::activation_from_name(arch["activation"].get<std::string>());
    }
    s.tasks = j.value("tasks", s.tasks);
    s.samples = j.value("samples", s.samples);
    s.holdout_samples = j.value("holdout_samples", s.holdout_samples);
    s.rank = j.value("rank", s.rank);
    if (j.contains("distribution")) {
        const auto& dist = j["distribution"];
        const std::string family = dist.value("family", std::string("isotropic"));
        if (family == "isotropic")
            s.distribution.family = InputFamily::Isotropic;
        else if (family == "anisotropic")
            s.distribution.family = InputFamily::Anisotropic;
        else
            throw ConfigError("unknown distribution family '" + family + "'");
        s.distribution.condition = dist.value("condition", s.distribution.condition);
        s.distribution.effective_rank =
            dist.value("effective_rank", s.distribution.effective_rank);
        s.distribution.mean_scale = dist.value("mean_scale", s.distribution.mean_scale);
        if (dist.contains("input_scales"))
            s.distribution.input_scales = dist["input_scales"].get<std::vector<double>>();
    }
    if (j.contains("adapter_mode")) {
        const std::string mode = j["adapter_mode"].get<std::string>();
        if (mode == "random_lowrank")
            s.adapter_mode = AdapterMode::RandomLowRank;
        else if (mode == "target_fit")
            s.adapter_mode = AdapterMode::TargetFit;
        else
            throw ConfigError("unknown adapter_mode '" + mode + "'");
    }
    s.adapter_scale = j.value("adapter_scale", s.adapter_scale);
    s.seed = j.value("seed", s.seed);
    s.check();
    return s;
} catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth spec: ") + e.what());
}

// Paths plus the merge configuration for one run. Task count must be
// consistent across the adapter and sample lists.
struct RunManifest {
    std::filesystem::path graph;
    std::filesystem::path base;
    std::vector<std::filesystem::path> adapters;
    std::vector<std::filesystem::path> samples;
    MergeConfig config;
    std::filesystem::path merged_out = "merged.bundle";
    std::filesystem::path report_out = "report.json";

    void check() const {
        if (adapters.empty()) throw ConfigError("manifest lists no adapter bundles");
        if (adapters.size() != samples.size())
            throw ConfigError("manifest lists " + std::to_string(adapters.size()) +
                              " adapter bundles but " + std::to_string(samples.size()) +
                              " sample bundles");
        config.check(adapters.size());
    }
};

inline nlohmann::json run_manifest_to_json(const RunManifest& m) {
    nlohmann::json j;
    j["graph"] = m.graph.string();
    j["base"] = m.base.string();
    nlohmann::json adapters = nlohmann::json::array();
    for (const auto& p : m.adapters) adapters.push_back(p.string());
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& p : m.samples) samples.push_back(p.string());
    j["adapters"] = adapters;
    j["samples"] = samples;
    j["config"] = config_to_json(m.config);
    j["output"] = {{"merged", m.merged_out.string()}, {"report", m.report_out.string()}};
    return j;
}

inline RunManifest run_manifest_from_json(const nlohmann::json& j,
                                          const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw ConfigError("run manifest must be a JSON object");
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };
    RunManifest m;
    try {
        m.graph = resolve(j.at("graph").get<std::string>());
        m.base = resolve(j.at("base").get<std::string>());
        for (const auto& p : j.at("adapters"))
            m.adapters.push_back(resolve(p.get<std::string>()));
        for (const auto& p : j.at("samples"))
            m.samples.push_back(resolve(p.get<std::string>()));
        if (j.contains("config")) m.config = config_from_json(j["config"]);
        if (j.contains("output")) {
            const auto& out = j["output"];
            if (out.contains("merged")) m.merged_out = resolve(out["merged"].get<std::string>());
            if (out.contains("report")) m.report_out = resolve(out["report"].get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("run manifest: ") + e.what());
    }
    m.check();
    return m;
}

inline RunManifest load_run_manifest(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("manifest '" + path.string() + "': malformed JSON: " + e.what());
    }
    return run_manifest_from_json(j, path.parent_path());
}

inline void save_run_manifest(const RunManifest& m, const std::filesystem::path& path) {
    detail::atomic_write(path, run_manifest_to_json(m).dump(2) + "\n");
}

inline SynthSpec load_synth_spec(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("synth spec '" + path.string() + "': malformed JSON: " + e.what());
    }
    return synth_spec_from_json(j);
}

} // namespace iteris
