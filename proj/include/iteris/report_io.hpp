#pragma once

// Report and diagnostic file formats. The merge report is JSON with every
// seeded quantity reproducible bit-for-bit; wall-clock measurements live in
// a separate "timing" block so two identical runs differ in that block only.
// CSV outputs are plot-ready long format.

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "iteris/bundle.hpp"
#include "iteris/harness.hpp"
#include "iteris/manifest.hpp"
#include "iteris/merging.hpp"

namespace iteris {

inline nlohmann::json report_to_json(const MergeReport& report) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["config"] = config_to_json(report.config);
    j["tasks"] = report.tasks;
    nlohmann::json site_list = nlohmann::json::array();
    for (const auto& site : report.site_ids)
        site_list.push_back({{"index", site.index}, {"label", site.label}});
    j["sites"] = site_list;
    j["lambda"] = report.lambda;
    j["balance_shares"] = report.balance_shares;
    j["converged_at"] = report.converged_at ? nlohmann::json(*report.converged_at)
                                            : nlohmann::json(nullptr);

    nlohmann::json iterations = nlohmann::json::array();
    nlohmann::json timing = nlohmann::json::array();
    for (std::size_t t = 0; t < report.iterations.size(); ++t) {
        const IterationStats& it = report.iterations[t];
        iterations.push_back({{"iteration", t + 1},
                              {"objective_per_site", it.objective_per_site},
                              {"max_relative_change", it.max_relative_change},
                              {"alignment_error", it.alignment_error},
                              {"discrepancy", it.discrepancy}});
        timing.push_back({{"iteration", t + 1},
                          {"solve_seconds", it.solve_seconds},
                          {"install_seconds", it.install_seconds},
                          {"capture_seconds", it.capture_seconds}});
    }
    j["iterations"] = iterations;
    j["timing"] = {{"per_iteration", timing}, {"total_seconds", report.total_seconds}};
    return j;
}

// Comparison view for determinism checks: everything except wall-clock.
inline nlohmann::json report_without_timing(nlohmann::json report) {
    report.erase("timing");
    return report;
}

inline void save_report(const MergeReport& report, const std::filesystem::path& path) {
    detail::atomic_write(path, report_to_json(report).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// CSV (long format)
// ---------------------------------------------------------------------------

namespace detail {

inline std::string csv_number(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

inline std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        out.push_back(c);
    }
    out += "\"";
    return out;
}

} // namespace detail

// iteration,site,site_label,task,discrepancy
inline std::string discrepancy_csv(const MergeReport& report) {
    std::string out = "iteration,site,site_label,task,discrepancy\n";
    for (std::size_t t = 0; t < report.iterations.size(); ++t)
        for (std::size_t j = 0; j < report.site_ids.size(); ++j)
            for (std::size_t n = 0; n < report.tasks; ++n)
                out += std::to_string(t + 1) + "," + std::to_string(j) + "," +
                       detail::csv_quote(report.site_ids[j].label) + "," + std::to_string(n) +
                       "," + detail::csv_number(report.iterations[t].discrepancy[j][n]) + "\n";
    return out;
}

// site,site_label,task,share,lambda
inline std::string balance_csv(const MergeReport& report) {
    std::string out = "site,site_label,task,share,lambda\n";
    for (std::size_t j = 0; j < report.site_ids.size(); ++j)
        for (std::size_t n = 0; n < report.tasks; ++n)
            out += std::to_string(j) + "," + detail::csv_quote(report.site_ids[j].label) + "," +
                   std::to_string(n) + "," + detail::csv_number(report.balance_shares[j][n]) +
                   "," + detail::csv_number(report.lambda[j][n]) + "\n";
    return out;
}

inline const char* ablation_axis_name(AblationAxis axis) {
    switch (axis) {
        case AblationAxis::MaxIterations: return "max_iterations";
        case AblationAxis::Alpha: return "alpha";
        case AblationAxis::AdaptiveWeights: return "adaptive_weights";
    }
    return "?";
}

// axis,grid_value,failed,error,task,holdout_error,objective,converged_at
inline std::string ablation_csv(AblationAxis axis, const std::vector<AblationPoint>& table) {
    std::string out = "axis,grid_value,failed,error,task,holdout_error,objective,converged_at\n";
    for (const AblationPoint& p : table) {
        const std::string prefix = std::string(ablation_axis_name(axis)) + "," +
                                   detail::csv_number(p.grid_value) + "," +
                                   (p.failed ? "1" : "0") + "," + detail::csv_quote(p.error);
        const std::string converged =
            p.converged_at ? std::to_string(*p.converged_at) : std::string();
        if (p.failed || p.holdout_error.empty()) {
            out += prefix + ",,,," + "\n";
        } else {
            for (std::size_t n = 0; n < p.holdout_error.size(); ++n)
                out += prefix + "," + std::to_string(n) + "," +
                       detail::csv_number(p.holdout_error[n]) + "," +
                       detail::csv_number(p.objective) + "," + converged + "\n";
        }
    }
    return out;
}

inline nlohmann::json comparison_to_json(const ComparisonResult& r) {
    nlohmann::json methods = nlohmann::json::array();
    for (MergeMethod m : r.methods) methods.push_back(detail::method_name(m));
    nlohmann::json wins = nlohmann::json::object();
    for (std::size_t a = 0; a < r.methods.size(); ++a)
        for (std::size_t b = 0; b < r.methods.size(); ++b)
            if (a != b)
                wins[std::string(detail::method_name(r.methods[a])) + ">" +
                     detail::method_name(r.methods[b])] = r.wins[a][b];
    return nlohmann::json{{"methods", methods},
                          {"seeds", r.seeds},
                          {"tasks", r.tasks},
                          {"mean_alignment", r.mean_alignment},
                          {"mean_objective", r.mean_objective},
                          {"per_seed_error", r.per_seed_error},
                          {"per_seed_objective_first", r.per_seed_objective_first},
                          {"per_seed_objective_final", r.per_seed_objective_final},
                          {"win_counts", wins}};
}

// method,seed,error,objective_first,objective_final
inline std::string comparison_csv(const ComparisonResult& r) {
    std::string out = "method,seed,error,objective_first,objective_final\n";
    for (std::size_t m = 0; m < r.methods.size(); ++m)
        for (std::size_t s = 0; s < r.seeds; ++s)
            out += std::string(detail::method_name(r.methods[m])) + "," + std::to_string(s) +
                   "," + detail::csv_number(r.per_seed_error[m][s]) + "," +
                   detail::csv_number(r.per_seed_objective_first[m][s]) + "," +
                   detail::csv_number(r.per_seed_objective_final[m][s]) + "\n";
    return out;
}

} // namespace iteris
