#pragma once

// Low-rank adapter representation, effective-weight materialization, and
// re-factorization of merged dense deltas back to low rank.
//
// Factor convention, fixed: delta = scale * (up * down)^T with
// down: r x d_in and up: d_out x r, so the delta matches the d_in x d_out
// weight it attaches to. Importers of other conventions must transpose.

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "iteris/errors.hpp"
#include "iteris/graph.hpp"
#include "iteris/linalg.hpp"
#include "iteris/matrix.hpp"

namespace iteris {

enum class WeightScope { Delta, Full };

struct LoraAdapter {
    SiteId site;
    Matrix down;        // r x d_in
    Matrix up;          // d_out x r
    std::size_t rank = 0;
    double scale = 1.0; // the adapter's alpha/r multiplier

    void check() const {
        if (rank < 1) throw DomainError("adapter rank must be >= 1");
        if (down.rows() != rank || up.cols() != rank)
            throw ShapeError("adapter factors disagree with rank " + std::to_string(rank) +
                             ": down " + down.shape_str() + ", up " + up.shape_str());
        if (rank > std::min(down.cols(), up.rows()))
            throw DomainError("adapter rank " + std::to_string(rank) + " exceeds min(" +
                              std::to_string(down.cols()) + ", " + std::to_string(up.rows()) +
                              ")");
        if (!(scale > 0.0)) throw DomainError("adapter scale must be positive");
    }
};

// One task's fine-tune: an adapter for every site of the graph.
struct AdapterSet {
    std::size_t task = 0;
    std::map<std::size_t, LoraAdapter> adapters; // site index -> adapter
    WeightScope weight_scope = WeightScope::Delta;
};

// scope Delta: scale * (up * down)^T.  scope Full: base + that.
inline Matrix effective_weight(const LoraAdapter& adapter, const Matrix& base,
                               WeightScope scope) {
    adapter.check();
    if (adapter.down.cols() != base.rows() || adapter.up.rows() != base.cols())
        throw ShapeError("adapter factors (" + adapter.down.shape_str() + ", " +
                         adapter.up.shape_str() + ") do not match base " + base.shape_str());
    Matrix delta = multiply(adapter.up, adapter.down).transposed();
    delta *= adapter.scale;
    if (scope == WeightScope::Full) delta += base;
    return delta;
}

// Best rank-r factorization of a dense delta by truncated SVD; the
// reconstruction error equals the tail singular-value energy.
inline LoraAdapter refactor_low_rank(const Matrix& delta, std::size_t target_rank,
                                     SiteId site = {}) {
    if (target_rank < 1 || target_rank > std::min(delta.rows(), delta.cols()))
        throw DomainError("refactor_low_rank: target rank " + std::to_string(target_rank) +
                          " outside [1, " +
                          std::to_string(std::min(delta.rows(), delta.cols())) + "]");
    const Svd dec = svd(delta);
    LoraAdapter out;
    out.site = site;
    out.rank = target_rank;
    out.scale = 1.0;
    out.down = Matrix(target_rank, delta.rows());
    out.up = Matrix(delta.cols(), target_rank);
    for (std::size_t k = 0; k < target_rank; ++k) {
        const double root = std::sqrt(dec.sigma[k]);
        for (std::size_t i = 0; i < delta.rows(); ++i) out.down(k, i) = root * dec.u(i, k);
        for (std::size_t j = 0; j < delta.cols(); ++j) out.up(j, k) = root * dec.v(j, k);
    }
    return out;
}

// Materializes one task's adapters into dense per-site deltas on a copy of
// the base instance.
inline ModelInstance instantiate(const ModelInstance& base, const AdapterSet& set) {
    ModelInstance out = base;
    const auto site_table = sites(base.graph);
    if (set.adapters.size() != site_table.size())
        throw DomainError("adapter set covers " + std::to_string(set.adapters.size()) +
                          " sites, graph has " + std::to_string(site_table.size()));
    for (const auto& info : site_table) {
        auto it = set.adapters.find(info.id.index);
        if (it == set.adapters.end())
            throw DomainError("adapter set is missing site " + std::to_string(info.id.index) +
                              " ('" + info.id.label + "')");
        const Matrix& base_w = base.parameters.at(info.weight);
        out.adapters[info.id.index] = effective_weight(it->second, base_w, WeightScope::Delta);
    }
    return out;
}

} // namespace iteris
