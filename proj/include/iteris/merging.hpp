#pragma once

// The three merging algorithms over a shared objective:
//
//   linear   — weighted averaging of per-site weights; exact only under
//              isotropic input features.
//   regmean  — per-site matrix-space regression against captured features,
//              W* = (sum_i G_i)^-1 (sum_i G_i W_i) with G_i = X_i X_i^T and
//              off-diagonal damping.
//   iteris   — iterative inference-solving: align each task's true outputs
//              W_i^T X_i with the unified adapter acting on the *unified
//              model's own* features X~_i, re-captured after every solve:
//              W* = (sum_i l_i G~_i)^-1 (sum_i l_i G_i W_i),
//              G_i  = X~_i X_i^T  + a ||X~_i X_i^T||_F  I
//              G~_i = X~_i X~_i^T + a ||X~_i X~_i^T||_F I
//
// Per-(task,site) weights l are computed once at initialization: adaptive
// mode uses l = ||W||_F^2 / ||W^T X||_F^2, which equalizes the magnitudes of
// the per-task objective terms.

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "iteris/adapters.hpp"
#include "iteris/errors.hpp"
#include "iteris/graph.hpp"
#include "iteris/linalg.hpp"
#include "iteris/matrix.hpp"

namespace iteris {

enum class MergeMethod { Linear, RegMean, IterIS };
enum class WeightMode { Adaptive, Uniform };

struct MergeConfig {
    MergeMethod method = MergeMethod::IterIS;
    double alpha = 1e-4;                  // relative ridge coefficient
    std::size_t max_iterations = 20;
    double convergence_tolerance = 1e-9;  // relative Frobenius adapter change
    WeightMode weight_mode = WeightMode::Adaptive;
    WeightScope weight_scope = WeightScope::Delta;
    double regmean_offdiagonal_scale = 0.1;
    std::optional<std::vector<double>> linear_weights; // default uniform 1/N
    std::uint64_t seed = 0;

    void check(std::size_t tasks) const {
        if (!(alpha >= 0.0) || !std::isfinite(alpha))
            throw ConfigError("alpha must be finite and nonnegative");
        if (max_iterations < 1) throw ConfigError("max_iterations must be positive");
        if (!(convergence_tolerance >= 0.0) || !std::isfinite(convergence_tolerance))
            throw ConfigError("convergence_tolerance must be finite and nonnegative");
        if (!(regmean_offdiagonal_scale > 0.0) || regmean_offdiagonal_scale > 1.0)
            throw ConfigError("regmean_offdiagonal_scale must lie in (0, 1]");
        if (linear_weights && linear_weights->size() != tasks)
            throw ConfigError("linear_weights must list one coefficient per task");
    }
};

// Per-iteration diagnostics. objective/alignment are computed at solve time
// (against the features the solve consumed); discrepancy is computed after
// the post-install re-capture.
struct IterationStats {
    std::vector<double> objective_per_site;           // [site]
    double max_relative_change = 0.0;
    std::vector<std::vector<double>> alignment_error; // [site][task]
    std::vector<std::vector<double>> discrepancy;     // [site][task], ||X~ - X||_F
    double solve_seconds = 0.0;
    double install_seconds = 0.0;
    double capture_seconds = 0.0;
};

struct MergeReport {
    MergeConfig config;
    std::vector<SiteId> site_ids;
    std::size_t tasks = 0;
    std::vector<std::vector<double>> lambda;         // [site][task]
    std::vector<std::vector<double>> balance_shares; // [site][task], rows sum to 1
    std::optional<std::size_t> converged_at; // iteration whose solve was final
    std::vector<IterationStats> iterations;
    double total_seconds = 0.0;
};

// ---------------------------------------------------------------------------
// per-site operations
// ---------------------------------------------------------------------------

// ||w||_F^2 / ||w^T x||_F^2; undefined (error) when the task produces zero
// output features at this site.
inline double adaptive_weight(const Matrix& w, const Matrix& x, const std::string& context = {}) {
    if (w.rows() != x.rows())
        throw ShapeError("adaptive_weight: weight rows " + w.shape_str() +
                         " do not match features " + x.shape_str());
    const double out = frobenius_norm(transpose_multiply(w, x));
    if (out == 0.0)
        throw DegenerateTaskError("adaptive_weight: ||W^T X||_F is zero" +
                                  (context.empty() ? std::string() : " at " + context));
    const double nw = frobenius_norm(w);
    return (nw * nw) / (out * out);
}

inline Matrix linear_merge(const std::vector<Matrix>& weights,
                           const std::vector<double>& coefficients) {
    if (weights.empty()) throw DomainError("linear_merge: empty weight list");
    if (coefficients.size() != weights.size())
        throw DomainError("linear_merge: need one coefficient per weight");
    double sum = 0.0;
    for (double c : coefficients) {
        if (!std::isfinite(c)) throw DomainError("linear_merge: non-finite coefficient");
        sum += c;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
        throw DomainError("linear_merge: coefficients sum to " + std::to_string(sum) +
                          ", expected 1");
    Matrix out(weights[0].rows(), weights[0].cols());
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (!weights[i].same_shape(out))
            throw DomainError("linear_merge: weight " + std::to_string(i) + " is " +
                              weights[i].shape_str() + ", expected " + out.shape_str());
        Matrix term = weights[i];
        term *= coefficients[i];
        out += term;
    }
    return out;
}

// Gram-based regression with off-diagonal damping applied to each task's
// G_i = X_i X_i^T before both the sum and the product.
inline Matrix regmean_merge(const std::vector<Matrix>& weights,
                            const std::vector<Matrix>& features, double offdiagonal_scale) {
    if (weights.empty() || weights.size() != features.size())
        throw DomainError("regmean_merge: need matching weight/feature lists");
    const std::size_t d = weights[0].rows();
    Matrix lhs(d, d);
    Matrix rhs(d, weights[0].cols());
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (features[i].rows() != d)
            throw ShapeError("regmean_merge: features for task " + std::to_string(i) + " have " +
                             std::to_string(features[i].rows()) + " rows, weights have " +
                             std::to_string(d));
        Matrix g = gram(features[i], features[i]);
        if (offdiagonal_scale != 1.0) {
            for (std::size_t r = 0; r < d; ++r)
                for (std::size_t c = 0; c < d; ++c)
                    if (r != c) g(r, c) *= offdiagonal_scale;
        }
        lhs += g;
        rhs += multiply(g, weights[i]);
    }
    try {
        return solve_symmetric(lhs, rhs);
    } catch (const SingularError& e) {
        throw SingularError(std::string(e.what()) +
                            " (accumulated Gram matrix is singular; supply more samples per "
                            "task or merge fewer tasks)");
    }
}

// Closed-form per-site solve of the iterative objective with relative-ridge
// regularization (alpha may be 0).
inline Matrix iteris_solve_site(const std::vector<Matrix>& weights,
                                const std::vector<Matrix>& features_x,
                                const std::vector<Matrix>& features_xtilde,
                                const std::vector<double>& lambdas, double alpha,
                                const std::string& context = {}) {
    const std::size_t n = weights.size();
    if (n == 0) throw DomainError("iteris_solve_site: empty task list");
    if (features_x.size() != n || features_xtilde.size() != n || lambdas.size() != n)
        throw DomainError("iteris_solve_site: per-task lists must have equal length");

    const std::size_t d = weights[0].rows();
    Matrix lhs(d, d);
    Matrix rhs(d, weights[0].cols());
    for (std::size_t i = 0; i < n; ++i) {
        if (!(lambdas[i] > 0.0)) throw DomainError("iteris_solve_site: lambdas must be positive");
        if (!features_x[i].all_finite() || !features_xtilde[i].all_finite())
            throw DataError("iteris_solve_site: non-finite feature values for task " +
                            std::to_string(i));
        if (features_x[i].rows() != d || features_xtilde[i].rows() != d ||
            features_x[i].cols() != features_xtilde[i].cols())
            throw ShapeError("iteris_solve_site: task " + std::to_string(i) +
                             " features X " + features_x[i].shape_str() + " / X~ " +
                             features_xtilde[i].shape_str() + " incompatible with weights " +
                             weights[i].shape_str());
        Matrix g = regularize_gram(gram(features_xtilde[i], features_x[i]), alpha);
        Matrix gt = regularize_gram(gram(features_xtilde[i], features_xtilde[i]), alpha);
        gt *= lambdas[i];
        lhs += gt;
        Matrix gw = multiply(g, weights[i]);
        gw *= lambdas[i];
        rhs += gw;
    }
    return solve_symmetric(lhs, rhs, context);
}

// sum_i l_i || W_i^T X_i - W^T X~_i ||_F^2
inline double objective_value(const Matrix& merged_w, const std::vector<Matrix>& weights,
                              const std::vector<Matrix>& features_x,
                              const std::vector<Matrix>& features_xtilde,
                              const std::vector<double>& lambdas) {
    if (weights.size() != features_x.size() || weights.size() != features_xtilde.size() ||
        weights.size() != lambdas.size())
        throw DomainError("objective_value: per-task lists must have equal length");
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const Matrix target = transpose_multiply(weights[i], features_x[i]);
        const Matrix got = transpose_multiply(merged_w, features_xtilde[i]);
        if (!target.same_shape(got))
            throw ShapeError("objective_value: task " + std::to_string(i) +
                             " output shapes disagree, " + target.shape_str() + " vs " +
                             got.shape_str());
        const double r = frobenius_norm(target - got);
        acc += lambdas[i] * r * r;
    }
    return acc;
}

// share_i = l_i ||W_i^T X_i||^2 / sum_j l_j ||W_j^T X_j||^2
inline std::vector<double> balance_shares(const std::vector<Matrix>& weights,
                                          const std::vector<Matrix>& features_x,
                                          const std::vector<double>& lambdas) {
    if (weights.size() < 2) throw DomainError("balance_shares: needs at least two tasks");
    if (features_x.size() != weights.size() || lambdas.size() != weights.size())
        throw DomainError("balance_shares: per-task lists must have equal length");
    std::vector<double> terms(weights.size());
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double out = frobenius_norm(transpose_multiply(weights[i], features_x[i]));
        terms[i] = lambdas[i] * out * out;
        total += terms[i];
    }
    if (total == 0.0)
        throw DegenerateTaskError("balance_shares: all task terms are zero");
    for (double& t : terms) t /= total;
    return terms;
}

// ---------------------------------------------------------------------------
// model-level drivers
// ---------------------------------------------------------------------------

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct MergeSetup {
    GraphIndex index;
    std::vector<SiteInfo> site_table;
    std::size_t tasks = 0;
    // [site][task]
    std::vector<std::vector<Matrix>> task_weights; // per config scope
    std::vector<std::vector<Matrix>> features_x;   // captured once from task models
    std::vector<std::vector<double>> lambda;
};

inline MergeSetup prepare(const std::vector<ModelInstance>& instances,
                          const ModelInstance& base, const std::vector<Matrix>& task_inputs,
                          const MergeConfig& config) {
    if (instances.empty()) throw DomainError("merge: no task models given");
    if (task_inputs.size() != instances.size())
        throw DomainError("merge: need one input batch per task model");
    config.check(instances.size());

    MergeSetup s;
    s.index = build_index(base.graph);
    s.site_table = s.index.sites;
    s.tasks = instances.size();
    if (s.site_table.empty()) throw DomainError("merge: graph has no adapter sites");

    for (std::size_t n = 0; n < instances.size(); ++n) {
        bool same_graph = instances[n].graph.nodes.size() == base.graph.nodes.size() &&
                          instances[n].graph.input_width == base.graph.input_width;
        for (std::size_t v = 0; same_graph && v < base.graph.nodes.size(); ++v)
            same_graph = instances[n].graph.nodes[v].id == base.graph.nodes[v].id &&
                         instances[n].graph.nodes[v].kind == base.graph.nodes[v].kind;
        if (!same_graph)
            throw DomainError("merge: task model " + std::to_string(n) +
                              " does not share the base graph");
        for (const auto& [name, value] : base.parameters) {
            auto it = instances[n].parameters.find(name);
            if (it == instances[n].parameters.end() || !(it->second == value))
                throw DomainError("merge: task model " + std::to_string(n) +
                                  " disagrees with the base parameters ('" + name + "')");
        }
    }

    const std::size_t j_count = s.site_table.size();
    s.task_weights.assign(j_count, std::vector<Matrix>(s.tasks));
    s.features_x.assign(j_count, std::vector<Matrix>(s.tasks));
    s.lambda.assign(j_count, std::vector<double>(s.tasks, 1.0));

    for (std::size_t n = 0; n < s.tasks; ++n) {
        std::vector<Matrix> captured;
        evaluate(instances[n], s.index, task_inputs[n], &captured);
        for (std::size_t j = 0; j < j_count; ++j) {
            const SiteInfo& info = s.site_table[j];
            auto it = instances[n].adapters.find(info.id.index);
            Matrix w = it != instances[n].adapters.end()
                           ? it->second
                           : Matrix(info.in_width, info.out_width);
            if (config.weight_scope == WeightScope::Full)
                w += base.parameters.at(info.weight);
            s.features_x[j][n] = std::move(captured[j]);
            s.task_weights[j][n] = std::move(w);
        }
    }

    if (config.weight_mode == WeightMode::Adaptive) {
        for (std::size_t j = 0; j < j_count; ++j)
            for (std::size_t n = 0; n < s.tasks; ++n)
                s.lambda[j][n] =
                    adaptive_weight(s.task_weights[j][n], s.features_x[j][n],
                                    "site " + std::to_string(j) + " ('" +
                                        s.site_table[j].id.label + "'), task " +
                                        std::to_string(n));
    }
    return s;
}

inline std::vector<std::vector<double>> shares_per_site(const MergeSetup& s) {
    std::vector<std::vector<double>> shares;
    shares.reserve(s.site_table.size());
    for (std::size_t j = 0; j < s.site_table.size(); ++j) {
        if (s.tasks >= 2) {
            shares.push_back(balance_shares(s.task_weights[j], s.features_x[j], s.lambda[j]));
        } else {
            shares.push_back({1.0});
        }
    }
    return shares;
}

} // namespace detail

// Full iterative inference-solving driver.
//
// Features X are captured once from the task models and never change; the
// unified-model features X~ start equal to X, and are re-captured on the
// merged model after each iteration installs every site's solution. Stops at
// max_iterations or when no site's delta moved more than the tolerance;
// converged_at is the iteration whose solve turned out to be final.
inline std::pair<ModelInstance, MergeReport> iteris_merge(
    const std::vector<ModelInstance>& instances, const ModelInstance& base,
    const std::vector<Matrix>& task_inputs, const MergeConfig& config) {
    const auto t_start = std::chrono::steady_clock::now();
    detail::MergeSetup s = detail::prepare(instances, base, task_inputs, config);
    const std::size_t j_count = s.site_table.size();

    MergeReport report;
    report.config = config;
    report.tasks = s.tasks;
    for (const auto& info : s.site_table) report.site_ids.push_back(info.id);
    report.lambda = s.lambda;
    report.balance_shares = detail::shares_per_site(s);

    ModelInstance merged = base;
    for (std::size_t j = 0; j < j_count; ++j)
        merged.adapters[s.site_table[j].id.index] =
            Matrix(s.site_table[j].in_width, s.site_table[j].out_width);

    std::vector<std::vector<Matrix>> xtilde = s.features_x;
    std::vector<Matrix> prev_delta(j_count);
    for (std::size_t j = 0; j < j_count; ++j)
        prev_delta[j] = merged.adapters.at(s.site_table[j].id.index);

    for (std::size_t iter = 1; iter <= config.max_iterations; ++iter) {
        IterationStats stats;
        stats.objective_per_site.resize(j_count);
        stats.alignment_error.assign(j_count, std::vector<double>(s.tasks, 0.0));
        stats.discrepancy.assign(j_count, std::vector<double>(s.tasks, 0.0));

        auto t_solve = std::chrono::steady_clock::now();
        std::vector<Matrix> solved(j_count);
        double max_change = 0.0;
        for (std::size_t j = 0; j < j_count; ++j) {
            const std::string context = "site " + std::to_string(j) + " ('" +
                                        s.site_table[j].id.label + "'), iteration " +
                                        std::to_string(iter);
            Matrix w = iteris_solve_site(s.task_weights[j], s.features_x[j], xtilde[j],
                                         s.lambda[j], config.alpha, context);
            stats.objective_per_site[j] =
                objective_value(w, s.task_weights[j], s.features_x[j], xtilde[j], s.lambda[j]);
            for (std::size_t n = 0; n < s.tasks; ++n)
                stats.alignment_error[j][n] = frobenius_norm(
                    transpose_multiply(s.task_weights[j][n], s.features_x[j][n]) -
                    transpose_multiply(w, xtilde[j][n]));
            Matrix delta = w;
            if (config.weight_scope == WeightScope::Full)
                delta -= base.parameters.at(s.site_table[j].weight);
            const double denom = std::max(1e-12, frobenius_norm(prev_delta[j]));
            max_change = std::max(max_change, frobenius_norm(delta - prev_delta[j]) / denom);
            solved[j] = std::move(delta);
        }
        stats.max_relative_change = max_change;
        stats.solve_seconds = detail::seconds_since(t_solve);

        auto t_install = std::chrono::steady_clock::now();
        for (std::size_t j = 0; j < j_count; ++j) {
            prev_delta[j] = solved[j];
            merged.adapters[s.site_table[j].id.index] = std::move(solved[j]);
        }
        stats.install_seconds = detail::seconds_since(t_install);

        auto t_capture = std::chrono::steady_clock::now();
        for (std::size_t n = 0; n < s.tasks; ++n) {
            std::vector<Matrix> captured;
            detail::evaluate(merged, s.index, task_inputs[n], &captured);
            for (std::size_t j = 0; j < j_count; ++j) {
                stats.discrepancy[j][n] = frobenius_norm(captured[j] - s.features_x[j][n]);
                xtilde[j][n] = std::move(captured[j]);
            }
        }
        stats.capture_seconds = detail::seconds_since(t_capture);

        report.iterations.push_back(std::move(stats));
        if (max_change < config.convergence_tolerance && iter > 1) {
            report.converged_at = iter - 1;
            break;
        }
    }

    report.total_seconds = detail::seconds_since(t_start);
    return {std::move(merged), std::move(report)};
}

// Single-pass drivers for the two baselines, sharing the capture/report
// machinery. Both record one iteration entry; converged_at is that pass.
inline std::pair<ModelInstance, MergeReport> single_pass_merge(
    const std::vector<ModelInstance>& instances, const ModelInstance& base,
    const std::vector<Matrix>& task_inputs, const MergeConfig& config) {
    const auto t_start = std::chrono::steady_clock::now();
    detail::MergeSetup s = detail::prepare(instances, base, task_inputs, config);
    const std::size_t j_count = s.site_table.size();

    MergeReport report;
    report.config = config;
    report.tasks = s.tasks;
    for (const auto& info : s.site_table) report.site_ids.push_back(info.id);
    report.lambda = s.lambda;
    report.balance_shares = detail::shares_per_site(s);

    std::vector<double> coeffs;
    if (config.method == MergeMethod::Linear) {
        coeffs = config.linear_weights
                     ? *config.linear_weights
                     : std::vector<double>(s.tasks, 1.0 / static_cast<double>(s.tasks));
    }

    ModelInstance merged = base;
    IterationStats stats;
    stats.objective_per_site.resize(j_count);
    stats.alignment_error.assign(j_count, std::vector<double>(s.tasks, 0.0));
    stats.discrepancy.assign(j_count, std::vector<double>(s.tasks, 0.0));

    auto t_solve = std::chrono::steady_clock::now();
    std::vector<Matrix> solved(j_count);
    for (std::size_t j = 0; j < j_count; ++j) {
        Matrix w = config.method == MergeMethod::Linear
                       ? linear_merge(s.task_weights[j], coeffs)
                       : regmean_merge(s.task_weights[j], s.features_x[j],
                                       config.regmean_offdiagonal_scale);
        stats.objective_per_site[j] =
            objective_value(w, s.task_weights[j], s.features_x[j], s.features_x[j], s.lambda[j]);
        for (std::size_t n = 0; n < s.tasks; ++n)
            stats.alignment_error[j][n] =
                frobenius_norm(transpose_multiply(s.task_weights[j][n], s.features_x[j][n]) -
                               transpose_multiply(w, s.features_x[j][n]));
        if (config.weight_scope == WeightScope::Full)
            w -= base.parameters.at(s.site_table[j].weight);
        solved[j] = std::move(w);
    }
    stats.max_relative_change = 0.0;
    stats.solve_seconds = detail::seconds_since(t_solve);

    auto t_install = std::chrono::steady_clock::now();
    for (std::size_t j = 0; j < j_count; ++j)
        merged.adapters[s.site_table[j].id.index] = std::move(solved[j]);
    stats.install_seconds = detail::seconds_since(t_install);

    auto t_capture = std::chrono::steady_clock::now();
    for (std::size_t n = 0; n < s.tasks; ++n) {
        std::vector<Matrix> captured;
        detail::evaluate(merged, s.index, task_inputs[n], &captured);
        for (std::size_t j = 0; j < j_count; ++j)
            stats.discrepancy[j][n] = frobenius_norm(captured[j] - s.features_x[j][n]);
    }
    stats.capture_seconds = detail::seconds_since(t_capture);

    report.iterations.push_back(std::move(stats));
    report.converged_at = 1;
    report.total_seconds = detail::seconds_since(t_start);
    return {std::move(merged), std::move(report)};
}

// Dispatch on config.method.
inline std::pair<ModelInstance, MergeReport> merge_models(
    const std::vector<ModelInstance>& instances, const ModelInstance& base,
    const std::vector<Matrix>& task_inputs, const MergeConfig& config) {
    if (config.method == MergeMethod::IterIS)
        return iteris_merge(instances, base, task_inputs, config);
    return single_pass_merge(instances, base, task_inputs, config);
}

} // namespace iteris
