#pragma once

// Synthetic-instance generation and desk-scale diagnostics: discrepancy
// curves, balance reports, ablations, and method comparisons. Every output
// is a pure function of (spec, seeds).

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "iteris/adapters.hpp"
#include "iteris/graph.hpp"
#include "iteris/merging.hpp"
#include "iteris/rng.hpp"

namespace iteris {

// ---------------------------------------------------------------------------
// graph builders
// ---------------------------------------------------------------------------

// input -> [linear(site) -> bias -> act] x depth -> output
// (no activation after the last layer). Bound: depth - 1.
inline ModelGraph build_mlp_chain(std::size_t depth, std::size_t width,
                                  ActivationFn act = ActivationFn::Relu) {
    if (depth < 1 || width < 1) throw DomainError("mlp_chain needs depth, width >= 1");
    ModelGraph g;
    g.input_width = width;
    g.nodes.push_back({"in", NodeKind::Input, {}});
    std::string prev = "in";
    for (std::size_t l = 0; l < depth; ++l) {
        const std::string tag = "layer" + std::to_string(l);
        g.parameters[tag + ".w"] = {width, width};
        g.parameters[tag + ".b"] = {width, 1};
        NodeSpec lin{tag, NodeKind::Linear, {prev}};
        lin.weight = tag + ".w";
        lin.site_label = tag;
        g.nodes.push_back(lin);
        NodeSpec bias{tag + ".bias", NodeKind::BiasAdd, {tag}};
        bias.weight = tag + ".b";
        g.nodes.push_back(bias);
        prev = tag + ".bias";
        if (l + 1 < depth) {
            NodeSpec act_node{tag + ".act", NodeKind::Activation, {prev}};
            act_node.activation = act;
            g.nodes.push_back(act_node);
            prev = tag + ".act";
        }
    }
    g.nodes.push_back({"out", NodeKind::Output, {prev}});
    return g;
}

// Pre-norm self-attention blocks with adapters on every q/k/v projection.
// Multi-head attention is expressed as a sum of per-head branches, each with
// its own output projection, so the dependency analysis follows the real
// data flow. Bound: layers - 1 (per-layer sites are siblings).
inline ModelGraph build_attention_stack(std::size_t layers, std::size_t heads,
                                        std::size_t width) {
    if (layers < 1 || heads < 1 || width < 1)
        throw DomainError("attention_stack needs layers, heads, width >= 1");
    if (width % heads != 0) throw DomainError("attention width must be divisible by heads");
    const std::size_t dh = width / heads;
    const double score_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    ModelGraph g;
    g.input_width = width;
    g.nodes.push_back({"in", NodeKind::Input, {}});
    std::string x = "in";
    for (std::size_t l = 0; l < layers; ++l) {
        const std::string L = "L" + std::to_string(l);
        NodeSpec ln{L + ".ln", NodeKind::LayerNorm, {x}};
        ln.epsilon = 1e-5;
        g.nodes.push_back(ln);

        std::string attn_sum;
        for (std::size_t h = 0; h < heads; ++h) {
            const std::string H = L + ".h" + std::to_string(h);
            for (const char* role : {"q", "k", "v"}) {
                g.parameters[H + "." + role] = {width, dh};
                NodeSpec proj{H + "." + role, NodeKind::Linear, {L + ".ln"}};
                proj.weight = H + "." + std::string(role);
                proj.site_label = H + "." + std::string(role);
                g.nodes.push_back(proj);
            }
            NodeSpec score{H + ".score", NodeKind::AttentionScore, {H + ".q", H + ".k"}};
            score.scale = score_scale;
            g.nodes.push_back(score);
            g.nodes.push_back({H + ".p", NodeKind::SoftmaxRows, {H + ".score"}});
            g.nodes.push_back({H + ".ctx", NodeKind::MatMul, {H + ".v", H + ".p"}});
            g.parameters[H + ".o"] = {dh, width};
            NodeSpec out_proj{H + ".proj", NodeKind::Linear, {H + ".ctx"}};
            out_proj.weight = H + ".o";
            g.nodes.push_back(out_proj);
            if (attn_sum.empty()) {
                attn_sum = H + ".proj";
            } else {
                const std::string sum_id = H + ".sum";
                g.nodes.push_back({sum_id, NodeKind::ResidualAdd, {attn_sum, H + ".proj"}});
                attn_sum = sum_id;
            }
        }
        g.nodes.push_back({L + ".attn_res", NodeKind::ResidualAdd, {x, attn_sum}});

        g.parameters[L + ".ffn.w1"] = {width, width};
        g.parameters[L + ".ffn.b1"] = {width, 1};
        g.parameters[L + ".ffn.w2"] = {width, width};
        NodeSpec f1{L + ".ffn1", NodeKind::Linear, {L + ".attn_res"}};
        f1.weight = L + ".ffn.w1";
        g.nodes.push_back(f1);
        NodeSpec b1{L + ".ffn.bias", NodeKind::BiasAdd, {L + ".ffn1"}};
        b1.weight = L + ".ffn.b1";
        g.nodes.push_back(b1);
        NodeSpec act{L + ".ffn.act", NodeKind::Activation, {L + ".ffn.bias"}};
        act.activation = ActivationFn::Gelu;
        g.nodes.push_back(act);
        NodeSpec f2{L + ".ffn2", NodeKind::Linear, {L + ".ffn.act"}};
        f2.weight = L + ".ffn.w2";
        g.nodes.push_back(f2);
        g.nodes.push_back({L + ".out", NodeKind::ResidualAdd, {L + ".attn_res", L + ".ffn2"}});
        x = L + ".out";
    }
    g.nodes.push_back({"out", NodeKind::Output, {x}});
    return g;
}

// One-layer encoder/decoder with adapters on the k and v projections of the
// encoder self-attention, the step-1 cross-attention (keys/values read the
// encoder output), and the step-2 decoder self-attention, whose input is the
// fed-back embedding of the step-1 decoder output. The feedback projection
// models one autoregressive generation step, which is what puts three site
// vertices on a single path: enc.k -> dec.cross.k -> dec.self.k. Bound: 2.
inline ModelGraph build_encoder_decoder(std::size_t width) {
    if (width < 1) throw DomainError("encoder_decoder needs width >= 1");
    const double sc = 1.0 / std::sqrt(static_cast<double>(width));
    ModelGraph g;
    g.input_width = width;
    for (const char* name :
         {"embed.src", "embed.bos", "embed.feedback", "enc.q", "enc.k", "enc.v", "dec.cross.q",
          "dec.cross.k", "dec.cross.v", "dec.self.q", "dec.self.k", "dec.self.v"})
        g.parameters[name] = {width, width};

    auto linear = [&](const std::string& id, const std::string& input, bool site) {
        NodeSpec n{id, NodeKind::Linear, {input}};
        n.weight = id;
        if (site) n.site_label = id;
        return n;
    };
    auto attention = [&](const std::string& tag, const std::string& q, const std::string& k,
                         const std::string& v) {
        NodeSpec score{tag + ".score", NodeKind::AttentionScore, {q, k}};
        score.scale = sc;
        g.nodes.push_back(score);
        g.nodes.push_back({tag + ".p", NodeKind::SoftmaxRows, {tag + ".score"}});
        g.nodes.push_back({tag + ".ctx", NodeKind::MatMul, {v, tag + ".p"}});
    };

    g.nodes.push_back({"src", NodeKind::Input, {}});
    g.nodes.push_back(linear("embed.src", "src", false));
    g.nodes.push_back(linear("enc.q", "embed.src", false));
    g.nodes.push_back(linear("enc.k", "embed.src", true));
    g.nodes.push_back(linear("enc.v", "embed.src", true));
    attention("enc", "enc.q", "enc.k", "enc.v");
    g.nodes.push_back({"enc.out", NodeKind::ResidualAdd, {"embed.src", "enc.ctx"}});

    g.nodes.push_back(linear("embed.bos", "src", false));
    g.nodes.push_back(linear("dec.cross.q", "embed.bos", false));
    g.nodes.push_back(linear("dec.cross.k", "enc.out", true));
    g.nodes.push_back(linear("dec.cross.v", "enc.out", true));
    attention("dec.cross", "dec.cross.q", "dec.cross.k", "dec.cross.v");
    g.nodes.push_back({"dec.step1", NodeKind::ResidualAdd, {"embed.bos", "dec.cross.ctx"}});

    g.nodes.push_back(linear("embed.feedback", "dec.step1", false));
    g.nodes.push_back(linear("dec.self.q", "embed.feedback", false));
    g.nodes.push_back(linear("dec.self.k", "embed.feedback", true));
    g.nodes.push_back(linear("dec.self.v", "embed.feedback", true));
    attention("dec.self", "dec.self.q", "dec.self.k", "dec.self.v");
    g.nodes.push_back({"dec.step2", NodeKind::ResidualAdd, {"embed.feedback", "dec.self.ctx"}});
    g.nodes.push_back({"out", NodeKind::Output, {"dec.step2"}});
    return g;
}

// ---------------------------------------------------------------------------
// synthetic instances
// ---------------------------------------------------------------------------

enum class ArchitectureKind { MlpChain, AttentionStack };
enum class InputFamily { Isotropic, Anisotropic };
enum class AdapterMode { RandomLowRank, TargetFit };

struct Architecture {
    ArchitectureKind kind = ArchitectureKind::MlpChain;
    std::size_t depth = 3;  // mlp_chain layers / attention_stack layers
    std::size_t heads = 1;  // attention_stack only
    std::size_t width = 8;
    ActivationFn activation = ActivationFn::Relu; // mlp_chain only
};

struct TaskDistribution {
    InputFamily family = InputFamily::Isotropic;
    double condition = 100.0;              // anisotropic covariance spread
    std::size_t effective_rank = 0;        // 0 = smooth spread; k > 0 = k unit
                                           // directions over a 1/sqrt(condition) floor
    double mean_scale = 0.0;               // magnitude of per-task mean offsets
    std::vector<double> input_scales;      // optional per-task multiplier
};

struct SynthSpec {
    Architecture architecture;
    std::size_t tasks = 2;
    std::size_t samples = 50;          // merge-time samples per task
    std::size_t holdout_samples = 500; // fresh evaluation samples per task
    std::size_t rank = 2;
    TaskDistribution distribution;
    AdapterMode adapter_mode = AdapterMode::RandomLowRank;
    double adapter_scale = 0.5;
    std::uint64_t seed = 0;

    void check() const {
        if (tasks < 1 || samples < 1 || rank < 1)
            throw DomainError("synth spec needs tasks, samples, rank >= 1");
        if (!distribution.input_scales.empty() && distribution.input_scales.size() != tasks)
            throw DomainError("input_scales must list one value per task");
    }
};

struct SynthInstance {
    ModelInstance base;
    std::vector<AdapterSet> adapter_sets;
    std::vector<ModelInstance> task_models;
    std::vector<Matrix> task_inputs;    // width x samples, per task
    std::vector<Matrix> holdout_inputs; // width x holdout_samples, per task
};

namespace detail {

// Per-task sampler: x = scale * (mean + A z) with A = I (isotropic) or a
// random rotation times a log-spread diagonal (anisotropic).
struct TaskSampler {
    Matrix transform; // width x width
    std::vector<double> mean;
    double scale = 1.0;

    Matrix draw(std::size_t count, Rng& rng) const {
        const std::size_t d = transform.rows();
        Matrix z = Matrix::random_normal(d, count, rng);
        Matrix x = multiply(transform, z);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < count; ++j) x(i, j) = scale * (x(i, j) + mean[i]);
        return x;
    }
};

inline Matrix random_rotation(std::size_t d, Rng& rng) {
    // Gram-Schmidt on a random Gaussian matrix
    Matrix a = Matrix::random_normal(d, d, rng);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            double dot = 0.0;
            for (std::size_t i = 0; i < d; ++i) dot += a(i, j) * a(i, k);
            for (std::size_t i = 0; i < d; ++i) a(i, j) -= dot * a(i, k);
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < d; ++i) norm += a(i, j) * a(i, j);
        norm = std::sqrt(norm);
        if (norm < 1e-12) return random_rotation(d, rng); // essentially never
        for (std::size_t i = 0; i < d; ++i) a(i, j) /= norm;
    }
    return a;
}

inline TaskSampler make_sampler(const SynthSpec& spec, std::size_t task, Rng& rng) {
    const std::size_t d = spec.architecture.width;
    TaskSampler s;
    s.mean.assign(d, 0.0);
    for (double& m : s.mean) m = spec.distribution.mean_scale * rng.normal();
    s.scale = spec.distribution.input_scales.empty() ? 1.0
                                                     : spec.distribution.input_scales[task];
    if (spec.distribution.family == InputFamily::Isotropic) {
        s.transform = Matrix::identity(d);
    } else {
        Matrix q = random_rotation(d, rng);
        const std::size_t k = std::min(spec.distribution.effective_rank, d);
        const double half_log = 0.5 * std::log(spec.distribution.condition);
        for (std::size_t j = 0; j < d; ++j) {
            const double sv = k > 0
                                  ? (j < k ? 1.0 : std::exp(-half_log))
                                  : std::exp(rng.uniform(-half_log, half_log));
            for (std::size_t i = 0; i < d; ++i) q(i, j) *= sv;
        }
        s.transform = q;
    }
    return s;
}

} // namespace detail

// Deterministic in (spec, seed): base model, per-task adapter sets, and
// merge-time plus held-out input batches.
inline SynthInstance synth_instance(const SynthSpec& spec) {
    spec.check();
    Rng root(spec.seed ^ 0x5eedf00dULL);

    SynthInstance out;
    out.base.graph =
        spec.architecture.kind == ArchitectureKind::MlpChain
            ? build_mlp_chain(spec.architecture.depth, spec.architecture.width,
                              spec.architecture.activation)
            : build_attention_stack(spec.architecture.depth, spec.architecture.heads,
                                    spec.architecture.width);

    Rng param_rng = root.fork(1);
    for (const auto& [name, shape] : out.base.graph.parameters) {
        const bool is_bias = shape.second == 1;
        const double sd = is_bias ? 0.05 : 1.0 / std::sqrt(static_cast<double>(shape.first));
        out.base.parameters[name] =
            Matrix::random_normal(shape.first, shape.second, param_rng, 0.0, sd);
    }

    const auto site_table = sites(out.base.graph);
    if (spec.rank > spec.architecture.width)
        throw DomainError("synth rank exceeds site width");

    Rng input_rng = root.fork(2);
    for (std::size_t n = 0; n < spec.tasks; ++n) {
        detail::TaskSampler sampler = detail::make_sampler(spec, n, input_rng);
        out.task_inputs.push_back(sampler.draw(spec.samples, input_rng));
        out.holdout_inputs.push_back(
            sampler.draw(std::max<std::size_t>(1, spec.holdout_samples), input_rng));
    }

    Rng adapter_rng = root.fork(3);
    for (std::size_t n = 0; n < spec.tasks; ++n) {
        AdapterSet set;
        set.task = n;
        for (const auto& info : site_table) {
            LoraAdapter a;
            a.site = info.id;
            a.rank = spec.rank;
            if (spec.adapter_mode == AdapterMode::RandomLowRank) {
                a.scale = spec.adapter_scale;
                a.down = Matrix::random_normal(spec.rank, info.in_width, adapter_rng, 0.0,
                                               1.0 / std::sqrt(double(info.in_width)));
                a.up = Matrix::random_normal(info.out_width, spec.rank, adapter_rng, 0.0,
                                             1.0 / std::sqrt(double(spec.rank)));
            } else {
                // Ridge-fit against a task-specific random target map, then
                // truncate to the requested rank. Uses this task's merge-time
                // features captured on the base model.
                Matrix target_delta =
                    Matrix::random_normal(info.in_width, info.out_width, adapter_rng, 0.0,
                                          spec.adapter_scale /
                                              std::sqrt(double(info.in_width)));
                auto feats = capture_features(out.base, {out.task_inputs[n]});
                const Matrix& x = feats[0][info.id.index].features;
                Matrix g = gram(x, x);
                Matrix lhs = regularize_gram(g, 1e-6);
                Matrix rhs = multiply(g, target_delta);
                Matrix fitted = solve_symmetric(lhs, rhs, "target_fit site " +
                                                              std::to_string(info.id.index));
                a = refactor_low_rank(fitted, spec.rank, info.id);
            }
            a.check();
            set.adapters[info.id.index] = std::move(a);
        }
        out.adapter_sets.push_back(std::move(set));
    }

    for (std::size_t n = 0; n < spec.tasks; ++n)
        out.task_models.push_back(instantiate(out.base, out.adapter_sets[n]));
    return out;
}

// ---------------------------------------------------------------------------
// diagnostics
// ---------------------------------------------------------------------------

// ||X~_j - X_j||_F per [site][task]: X captured on the task model, X~ on the
// merged model, both from the same task inputs, in graph site order.
inline std::vector<std::vector<double>> discrepancy_curve(
    const std::vector<ModelInstance>& task_models, const ModelInstance& merged,
    const std::vector<Matrix>& task_inputs) {
    if (task_models.size() != task_inputs.size())
        throw DomainError("discrepancy_curve: need one input batch per task model");
    const auto site_table = sites(merged.graph);
    std::vector<std::vector<double>> out(site_table.size(),
                                         std::vector<double>(task_models.size(), 0.0));
    for (std::size_t n = 0; n < task_models.size(); ++n) {
        auto x = capture_features(task_models[n], {task_inputs[n]});
        auto xt = capture_features(merged, {task_inputs[n]});
        for (std::size_t j = 0; j < site_table.size(); ++j)
            out[j][n] = frobenius_norm(xt[0][j].features - x[0][j].features);
    }
    return out;
}

// Relative held-out alignment error per task:
//   sqrt(sum_j ||W_nj^T X_nj - W*_j^T X~_nj||^2) / sqrt(sum_j ||W_nj^T X_nj||^2)
// with weights taken at the given scope and features captured on fresh
// inputs (task model for X, merged model for X~).
inline std::vector<double> holdout_alignment(const std::vector<ModelInstance>& task_models,
                                             const ModelInstance& merged,
                                             const std::vector<Matrix>& holdout_inputs,
                                             WeightScope scope = WeightScope::Delta) {
    if (task_models.size() != holdout_inputs.size())
        throw DomainError("holdout_alignment: need one input batch per task model");
    const auto site_table = sites(merged.graph);
    std::vector<double> errors(task_models.size(), 0.0);
    for (std::size_t n = 0; n < task_models.size(); ++n) {
        auto x = capture_features(task_models[n], {holdout_inputs[n]});
        auto xt = capture_features(merged, {holdout_inputs[n]});
        double num = 0.0, den = 0.0;
        for (std::size_t j = 0; j < site_table.size(); ++j) {
            const SiteInfo& info = site_table[j];
            auto w_of = [&](const ModelInstance& m) {
                auto it = m.adapters.find(info.id.index);
                Matrix w = it != m.adapters.end() ? it->second
                                                  : Matrix(info.in_width, info.out_width);
                if (scope == WeightScope::Full) w += m.parameters.at(info.weight);
                return w;
            };
            const Matrix target = transpose_multiply(w_of(task_models[n]), x[0][j].features);
            const Matrix got = transpose_multiply(w_of(merged), xt[0][j].features);
            const double r = frobenius_norm(target - got);
            const double t = frobenius_norm(target);
            num += r * r;
            den += t * t;
        }
        errors[n] = std::sqrt(num) / std::max(1e-300, std::sqrt(den));
    }
    return errors;
}

// Total alignment objective of a merged model evaluated honestly: task
// outputs W_i^T X_i against the unified adapters acting on the features X~
// the merged model itself produces for the same inputs, summed over sites.
// Lambda follows the given weight mode, computed from the task models.
inline double model_objective(const std::vector<ModelInstance>& task_models,
                              const ModelInstance& merged,
                              const std::vector<Matrix>& task_inputs,
                              WeightScope scope = WeightScope::Delta,
                              WeightMode mode = WeightMode::Adaptive) {
    const auto site_table = sites(merged.graph);
    const std::size_t tasks = task_models.size();
    std::vector<std::vector<Matrix>> x(site_table.size()), xt(site_table.size()),
        w(site_table.size());
    for (std::size_t n = 0; n < tasks; ++n) {
        auto xf = capture_features(task_models[n], {task_inputs[n]});
        auto xtf = capture_features(merged, {task_inputs[n]});
        for (std::size_t j = 0; j < site_table.size(); ++j) {
            const SiteInfo& info = site_table[j];
            Matrix wj = task_models[n].adapters.count(info.id.index)
                            ? task_models[n].adapters.at(info.id.index)
                            : Matrix(info.in_width, info.out_width);
            if (scope == WeightScope::Full) wj += task_models[n].parameters.at(info.weight);
            x[j].push_back(std::move(xf[0][j].features));
            xt[j].push_back(std::move(xtf[0][j].features));
            w[j].push_back(std::move(wj));
        }
    }
    double total = 0.0;
    for (std::size_t j = 0; j < site_table.size(); ++j) {
        std::vector<double> lambda(tasks, 1.0);
        if (mode == WeightMode::Adaptive)
            for (std::size_t n = 0; n < tasks; ++n)
                lambda[n] = adaptive_weight(w[j][n], x[j][n]);
        Matrix merged_w = merged.adapters.count(site_table[j].id.index)
                              ? merged.adapters.at(site_table[j].id.index)
                              : Matrix(site_table[j].in_width, site_table[j].out_width);
        if (scope == WeightScope::Full)
            merged_w += merged.parameters.at(site_table[j].weight);
        total += objective_value(merged_w, w[j], x[j], xt[j], lambda);
    }
    return total;
}

// ---------------------------------------------------------------------------
// sweeps and comparisons
// ---------------------------------------------------------------------------

enum class AblationAxis { MaxIterations, Alpha, AdaptiveWeights };

struct AblationPoint {
    double grid_value = 0.0;
    bool failed = false;
    std::string error;
    std::vector<double> holdout_error; // per task, relative
    double objective = 0.0;            // final recorded merge objective
    std::optional<std::size_t> converged_at;
};

// One merge per grid point on the same seeded instance. MaxIterations runs
// with tolerance 0 so the cap is exact; grid value 0 means "no merge"
// (zero adapters), kept out of MergeConfig whose cap must stay positive.
inline std::vector<AblationPoint> ablation_sweep(const SynthSpec& spec, AblationAxis axis,
                                                 const std::vector<double>& grid,
                                                 MergeConfig config = {}) {
    if (grid.empty()) throw DomainError("ablation_sweep: empty grid");
    SynthInstance inst = synth_instance(spec);
    std::vector<AblationPoint> table;
    for (double v : grid) {
        AblationPoint point;
        point.grid_value = v;
        MergeConfig c = config;
        c.method = MergeMethod::IterIS;
        bool skip_merge = false;
        switch (axis) {
            case AblationAxis::MaxIterations:
                if (v < 1.0) {
                    skip_merge = true;
                } else {
                    c.max_iterations = static_cast<std::size_t>(v);
                    c.convergence_tolerance = 0.0;
                }
                break;
            case AblationAxis::Alpha:
                c.alpha = v;
                break;
            case AblationAxis::AdaptiveWeights:
                c.weight_mode = v != 0.0 ? WeightMode::Adaptive : WeightMode::Uniform;
                break;
        }
        try {
            ModelInstance merged = inst.base;
            if (!skip_merge) {
                auto [m, report] = iteris_merge(inst.task_models, inst.base, inst.task_inputs, c);
                merged = std::move(m);
                point.converged_at = report.converged_at;
                for (double o : report.iterations.back().objective_per_site)
                    point.objective += o;
            } else {
                for (const auto& info : sites(inst.base.graph))
                    merged.adapters[info.id.index] = Matrix(info.in_width, info.out_width);
            }
            point.holdout_error = holdout_alignment(inst.task_models, merged,
                                                    inst.holdout_inputs, c.weight_scope);
        } catch (const std::exception& e) {
            point.failed = true;
            point.error = e.what();
        }
        table.push_back(std::move(point));
    }
    return table;
}

struct ComparisonResult {
    std::vector<MergeMethod> methods;
    std::size_t seeds = 0;
    std::size_t tasks = 0;
    std::vector<std::vector<double>> mean_alignment; // [method][task]
    std::vector<double> mean_objective;              // [method]
    std::vector<std::vector<double>> per_seed_error; // [method][seed]
    // honest objectives (model_objective) of the first solve and of the
    // final merged model; equal for the single-pass methods
    std::vector<std::vector<double>> per_seed_objective_first; // [method][seed]
    std::vector<std::vector<double>> per_seed_objective_final; // [method][seed]
    std::vector<std::vector<std::size_t>> wins; // [a][b]: seeds where a beats b on error
};

// Aggregates held-out alignment errors and recorded objectives over seeded
// instances; seed i runs on spec.seed + i.
inline ComparisonResult compare_methods(const SynthSpec& spec,
                                        const std::vector<MergeMethod>& methods,
                                        std::size_t seeds, MergeConfig config = {}) {
    if (methods.size() < 2) throw DomainError("compare_methods: need at least two methods");
    if (seeds < 1) throw DomainError("compare_methods: need at least one seed");
    ComparisonResult r;
    r.methods = methods;
    r.seeds = seeds;
    r.tasks = spec.tasks;
    const std::size_t m_count = methods.size();
    r.mean_alignment.assign(m_count, std::vector<double>(spec.tasks, 0.0));
    r.mean_objective.assign(m_count, 0.0);
    r.per_seed_error.assign(m_count, {});
    r.per_seed_objective_first.assign(m_count, {});
    r.per_seed_objective_final.assign(m_count, {});
    r.wins.assign(m_count, std::vector<std::size_t>(m_count, 0));

    for (std::size_t s = 0; s < seeds; ++s) {
        SynthSpec seeded = spec;
        seeded.seed = spec.seed + s;
        SynthInstance inst = synth_instance(seeded);
        for (std::size_t m = 0; m < m_count; ++m) {
            MergeConfig c = config;
            c.method = methods[m];
            c.seed = seeded.seed;
            auto [merged, report] = merge_models(inst.task_models, inst.base, inst.task_inputs, c);
            const auto errors = holdout_alignment(inst.task_models, merged, inst.holdout_inputs,
                                                  c.weight_scope);
            double mean_err = 0.0;
            for (std::size_t n = 0; n < errors.size(); ++n) {
                r.mean_alignment[m][n] += errors[n] / static_cast<double>(seeds);
                mean_err += errors[n] / static_cast<double>(errors.size());
            }
            r.per_seed_error[m].push_back(mean_err);
            const double final_objective = model_objective(
                inst.task_models, merged, inst.task_inputs, c.weight_scope, c.weight_mode);
            double first_objective = final_objective;
            if (methods[m] == MergeMethod::IterIS && c.max_iterations > 1) {
                MergeConfig first_pass = c;
                first_pass.max_iterations = 1;
                auto [merged_first, report_first] =
                    iteris_merge(inst.task_models, inst.base, inst.task_inputs, first_pass);
                first_objective = model_objective(inst.task_models, merged_first,
                                                  inst.task_inputs, c.weight_scope,
                                                  c.weight_mode);
            }
            r.per_seed_objective_first[m].push_back(first_objective);
            r.per_seed_objective_final[m].push_back(final_objective);
            r.mean_objective[m] += final_objective / static_cast<double>(seeds);
        }
        for (std::size_t a = 0; a < m_count; ++a)
            for (std::size_t b = 0; b < m_count; ++b)
                if (a != b && r.per_seed_error[a][s] < r.per_seed_error[b][s]) ++r.wins[a][b];
    }
    return r;
}

} // namespace iteris
