#pragma once

// Bundle schemas for graph-bound data.
//
//   base bundle     one tensor per declared parameter;   metadata.kind = "base"
//   adapter bundle  site{j}.down / site{j}.up per site;  metadata.kind = "adapters",
//                   metadata.sites["{j}"] = {label, rank, scale}, metadata.task = n
//   sample bundle   "samples" (+ optional "holdout");    metadata.kind = "samples"
//   merged bundle   site{j}.delta per site (dense), or down/up pairs after an
//                   opt-in low-rank refactor;            metadata.kind = "merged"

#include <filesystem>
#include <string>
#include <vector>

#include "iteris/adapters.hpp"
#include "iteris/bundle.hpp"
#include "iteris/errors.hpp"
#include "iteris/graph.hpp"
#include "iteris/graph_json.hpp"
#include "iteris/manifest.hpp"

namespace iteris {

inline TensorBundle base_to_bundle(const ModelInstance& base) {
    TensorBundle b;
    b.metadata["kind"] = "base";
    for (const auto& [name, value] : base.parameters) b.put(name, value);
    return b;
}

inline ModelInstance base_from_bundle(const TensorBundle& bundle, const ModelGraph& graph) {
    ModelInstance inst;
    inst.graph = graph;
    for (const auto& [name, shape] : graph.parameters) {
        const Matrix& value = bundle.get(name);
        if (value.rows() != shape.first || value.cols() != shape.second)
            throw ShapeError("base parameter '" + name + "' is " + value.shape_str() +
                             ", graph declares " + std::to_string(shape.first) + "x" +
                             std::to_string(shape.second));
        inst.parameters[name] = value;
    }
    return inst;
}

inline TensorBundle adapter_set_to_bundle(const AdapterSet& set, const ModelGraph& graph) {
    TensorBundle b;
    b.metadata["kind"] = "adapters";
    b.metadata["task"] = set.task;
    nlohmann::json site_meta = nlohmann::json::object();
    for (const auto& info : sites(graph)) {
        auto it = set.adapters.find(info.id.index);
        if (it == set.adapters.end())
            throw DomainError("adapter set is missing site " + std::to_string(info.id.index));
        const LoraAdapter& a = it->second;
        const std::string prefix = "site" + std::to_string(info.id.index);
        b.put(prefix + ".down", a.down);
        b.put(prefix + ".up", a.up);
        site_meta[std::to_string(info.id.index)] = {
            {"label", info.id.label}, {"rank", a.rank}, {"scale", a.scale}};
    }
    b.metadata["sites"] = site_meta;
    return b;
}

inline AdapterSet adapter_set_from_bundle(const TensorBundle& bundle, const ModelGraph& graph) {
    AdapterSet set;
    set.task = bundle.metadata.value("task", 0);
    const auto site_meta = bundle.metadata.value("sites", nlohmann::json::object());
    for (const auto& info : sites(graph)) {
        const std::string key = std::to_string(info.id.index);
        const std::string prefix = "site" + key;
        LoraAdapter a;
        a.site = info.id;
        a.down = bundle.get(prefix + ".down");
        a.up = bundle.get(prefix + ".up");
        if (site_meta.contains(key)) {
            a.rank = site_meta[key].value("rank", a.down.rows());
            a.scale = site_meta[key].value("scale", 1.0);
        } else {
            a.rank = a.down.rows();
            a.scale = 1.0;
        }
        if (a.down.cols() != info.in_width || a.up.rows() != info.out_width)
            throw ShapeError("adapter for site " + key + " is (" + a.down.shape_str() + ", " +
                             a.up.shape_str() + "), site is " + std::to_string(info.in_width) +
                             "x" + std::to_string(info.out_width));
        a.check();
        set.adapters[info.id.index] = std::move(a);
    }
    return set;
}

inline TensorBundle samples_to_bundle(const Matrix& samples, const Matrix* holdout = nullptr,
                                      std::size_t task = 0) {
    TensorBundle b;
    b.metadata["kind"] = "samples";
    b.metadata["task"] = task;
    b.put("samples", samples);
    if (holdout) b.put("holdout", *holdout);
    return b;
}

// Merged adapters are stored dense by default; `refactor_rank` switches to
// the low-rank down/up layout.
inline TensorBundle merged_to_bundle(const ModelInstance& merged, const MergeConfig& config,
                                     std::size_t refactor_rank = 0) {
    TensorBundle b;
    b.metadata["kind"] = "merged";
    b.metadata["config"] = config_to_json(config);
    nlohmann::json site_meta = nlohmann::json::object();
    for (const auto& info : sites(merged.graph)) {
        auto it = merged.adapters.find(info.id.index);
        if (it == merged.adapters.end())
            throw DomainError("merged instance is missing site " +
                              std::to_string(info.id.index));
        const std::string key = std::to_string(info.id.index);
        const std::string prefix = "site" + key;
        nlohmann::json meta = {{"label", info.id.label}};
        if (refactor_rank == 0) {
            b.put(prefix + ".delta", it->second);
        } else {
            const LoraAdapter a = refactor_low_rank(it->second, refactor_rank, info.id);
            b.put(prefix + ".down", a.down);
            b.put(prefix + ".up", a.up);
            meta["rank"] = a.rank;
            meta["scale"] = a.scale;
        }
        site_meta[key] = std::move(meta);
    }
    b.metadata["sites"] = site_meta;
    return b;
}

// Reads either merged layout (dense delta or down/up factors) back into an
// instance over the given base.
inline ModelInstance merged_from_bundle(const TensorBundle& bundle, const ModelInstance& base) {
    ModelInstance inst = base;
    const auto site_meta = bundle.metadata.value("sites", nlohmann::json::object());
    for (const auto& info : sites(base.graph)) {
        const std::string key = std::to_string(info.id.index);
        const std::string prefix = "site" + key;
        Matrix delta;
        if (bundle.has(prefix + ".delta")) {
            delta = bundle.get(prefix + ".delta");
        } else {
            LoraAdapter a;
            a.site = info.id;
            a.down = bundle.get(prefix + ".down");
            a.up = bundle.get(prefix + ".up");
            a.rank = site_meta.contains(key) ? site_meta[key].value("rank", a.down.rows())
                                             : a.down.rows();
            a.scale = site_meta.contains(key) ? site_meta[key].value("scale", 1.0) : 1.0;
            delta = effective_weight(a, base.parameters.at(info.weight), WeightScope::Delta);
        }
        if (delta.rows() != info.in_width || delta.cols() != info.out_width)
            throw ShapeError("merged delta for site " + key + " is " + delta.shape_str() +
                             ", site is " + std::to_string(info.in_width) + "x" +
                             std::to_string(info.out_width));
        inst.adapters[info.id.index] = std::move(delta);
    }
    return inst;
}

// Assembles the full merge input set named by a run manifest.
struct LoadedRun {
    ModelGraph graph;
    ModelInstance base;
    std::vector<AdapterSet> adapter_sets;
    std::vector<ModelInstance> task_models;
    std::vector<Matrix> task_inputs;
    std::vector<Matrix> holdout_inputs; // empty when sample bundles carry none
};

inline LoadedRun load_run(const RunManifest& manifest) {
    LoadedRun run;
    run.graph = load_graph(manifest.graph);
    validate(run.graph);
    run.base = base_from_bundle(TensorBundle::load(manifest.base), run.graph);
    bool all_holdouts = true;
    for (std::size_t n = 0; n < manifest.adapters.size(); ++n) {
        AdapterSet set = adapter_set_from_bundle(TensorBundle::load(manifest.adapters[n]),
                                                 run.graph);
        set.task = n;
        run.task_models.push_back(instantiate(run.base, set));
        run.adapter_sets.push_back(std::move(set));
        const TensorBundle samples = TensorBundle::load(manifest.samples[n]);
        run.task_inputs.push_back(samples.get("samples"));
        if (samples.has("holdout"))
            run.holdout_inputs.push_back(samples.get("holdout"));
        else
            all_holdouts = false;
    }
    if (!all_holdouts) run.holdout_inputs.clear();
    return run;
}

} // namespace iteris
