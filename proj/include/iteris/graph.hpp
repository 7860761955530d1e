#pragma once

// Deterministic forward-inference engine over directed-acyclic computation
// graphs with named adapter sites. Streams flow as d x S matrices with one
// column per sample/position; a linear node computes W^T * x so declared
// weights are d_in x d_out. Attention is composed from primitive nodes
// (linear, attention_score, softmax_rows, matmul) so the dependency analysis
// sees the real data flow.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "iteris/errors.hpp"
#include "iteris/linalg.hpp"
#include "iteris/matrix.hpp"

namespace iteris {

struct SiteId {
    std::size_t index = 0; // dense 0..J-1 in node declaration order
    std::string label;

    friend bool operator==(const SiteId& a, const SiteId& b) { return a.index == b.index; }
    friend bool operator<(const SiteId& a, const SiteId& b) { return a.index < b.index; }
};

enum class NodeKind {
    Input,
    Linear,
    BiasAdd,
    Activation,
    ResidualAdd,
    LayerNorm,
    AttentionScore,
    SoftmaxRows,
    MatMul,
    Output,
};

enum class ActivationFn { Relu, Gelu, Tanh };

struct NodeSpec {
    NodeSpec() = default;
    NodeSpec(std::string id, NodeKind kind, std::vector<std::string> inputs)
        : id(std::move(id)), kind(kind), inputs(std::move(inputs)) {}

    std::string id;
    NodeKind kind = NodeKind::Input;
    std::vector<std::string> inputs;

    std::string weight;                    // Linear: base weight name; BiasAdd: bias name
    std::optional<std::string> site_label; // Linear only; marks an adapter site
    ActivationFn activation = ActivationFn::Relu;
    double epsilon = 1e-5; // LayerNorm
    double scale = 1.0;    // AttentionScore
};

struct ModelGraph {
    std::size_t input_width = 0;
    std::vector<NodeSpec> nodes;
    // declared parameter shapes, name -> (rows, cols)
    std::map<std::string, std::pair<std::size_t, std::size_t>> parameters;
};

// One adapter site resolved against the graph.
struct SiteInfo {
    SiteId id;
    std::size_t node = 0; // index into graph.nodes
    std::string weight;   // base weight the delta attaches to
    std::size_t in_width = 0;
    std::size_t out_width = 0;
};

struct FeatureBatch {
    std::size_t task = 0;
    SiteId site;
    Matrix features; // d_in x S, the exact matrix fed into the site's linear transform
};

// graph + bound base parameters + per-site dense delta matrices
struct ModelInstance {
    ModelGraph graph;
    std::map<std::string, Matrix> parameters;
    std::map<std::size_t, Matrix> adapters; // site index -> d_in x d_out delta
};

namespace detail {

// Symbolic dimension: a fixed width or the per-call sample count S.
struct Dim {
    bool samples = false;
    std::size_t value = 0;

    static Dim fixed(std::size_t v) { return {false, v}; }
    static Dim s() { return {true, 0}; }
    friend bool operator==(const Dim& a, const Dim& b) {
        return a.samples == b.samples && (a.samples || a.value == b.value);
    }
    std::string str() const { return samples ? "S" : std::to_string(value); }
};

struct SymShape {
    Dim rows, cols;
    std::string str() const { return rows.str() + "x" + cols.str(); }
};

struct GraphIndex {
    std::vector<std::vector<std::size_t>> inputs;    // upstream node indices per node
    std::vector<std::vector<std::size_t>> consumers; // downstream node indices per node
    std::vector<std::size_t> topo;                   // node indices, topological order
    std::vector<SymShape> shapes;                    // symbolic output shape per node
    std::vector<SiteInfo> sites;                     // declaration order
    std::size_t input_node = 0;
    std::size_t output_node = 0;
    std::unordered_map<std::size_t, std::size_t> site_of_node; // node index -> site index
};

inline const char* kind_name(NodeKind k) {
    switch (k) {
        case NodeKind::Input: return "input";
        case NodeKind::Linear: return "linear";
        case NodeKind::BiasAdd: return "bias_add";
        case NodeKind::Activation: return "activation";
        case NodeKind::ResidualAdd: return "residual_add";
        case NodeKind::LayerNorm: return "layer_norm";
        case NodeKind::AttentionScore: return "attention_score";
        case NodeKind::SoftmaxRows: return "softmax_rows";
        case NodeKind::MatMul: return "matmul";
        case NodeKind::Output: return "output";
    }
    return "?";
}

inline std::size_t expected_arity(NodeKind k) {
    switch (k) {
        case NodeKind::Input: return 0;
        case NodeKind::ResidualAdd:
        case NodeKind::AttentionScore:
        case NodeKind::MatMul: return 2;
        default: return 1;
    }
}

inline GraphIndex build_index(const ModelGraph& g) {
    if (g.nodes.empty()) throw GraphError("graph has no nodes");
    if (g.input_width == 0) throw GraphError("graph input width must be positive");

    GraphIndex ix;
    const std::size_t n = g.nodes.size();
    std::unordered_map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& node = g.nodes[i];
        if (node.id.empty()) throw GraphError("node " + std::to_string(i) + " has empty id");
        if (!by_id.emplace(node.id, i).second)
            throw GraphError("duplicate node id '" + node.id + "'");
    }

    ix.inputs.resize(n);
    ix.consumers.resize(n);
    std::size_t input_count = 0, output_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& node = g.nodes[i];
        if (node.inputs.size() != expected_arity(node.kind))
            throw GraphError("node '" + node.id + "' (" + kind_name(node.kind) + ") expects " +
                             std::to_string(expected_arity(node.kind)) + " inputs, has " +
                             std::to_string(node.inputs.size()));
        for (const auto& ref : node.inputs) {
            auto it = by_id.find(ref);
            if (it == by_id.end())
                throw GraphError("node '" + node.id + "' references unknown node '" + ref + "'");
            ix.inputs[i].push_back(it->second);
            ix.consumers[it->second].push_back(i);
        }
        if (node.kind == NodeKind::Input) {
            ix.input_node = i;
            ++input_count;
        }
        if (node.kind == NodeKind::Output) {
            ix.output_node = i;
            ++output_count;
        }
        if (node.kind == NodeKind::Linear) {
            if (!g.parameters.count(node.weight))
                throw GraphError("linear node '" + node.id + "' uses undeclared weight '" +
                                 node.weight + "'");
            if (node.site_label) {
                SiteInfo s;
                s.id.index = ix.sites.size();
                s.id.label = *node.site_label;
                s.node = i;
                s.weight = node.weight;
                const auto& shape = g.parameters.at(node.weight);
                s.in_width = shape.first;
                s.out_width = shape.second;
                ix.site_of_node[i] = s.id.index;
                ix.sites.push_back(std::move(s));
            }
        } else if (node.site_label) {
            throw GraphError("node '" + node.id + "': only linear nodes may carry a site");
        }
        if (node.kind == NodeKind::BiasAdd && !g.parameters.count(node.weight))
            throw GraphError("bias_add node '" + node.id + "' uses undeclared bias '" +
                             node.weight + "'");
        if (node.kind == NodeKind::Output && !ix.consumers.empty()) {
            // downstream check happens after all edges are known
        }
    }
    if (input_count != 1) throw GraphError("graph must declare exactly one input node");
    if (output_count != 1) throw GraphError("graph must declare exactly one output node");
    if (!ix.consumers[ix.output_node].empty())
        throw GraphError("output node '" + g.nodes[ix.output_node].id + "' has consumers");

    // Kahn's algorithm; leftovers mean a cycle, name one back edge via DFS.
    std::vector<std::size_t> indeg(n, 0);
    for (std::size_t i = 0; i < n; ++i) indeg[i] = ix.inputs[i].size();
    std::vector<std::size_t> ready;
    for (std::size_t i = 0; i < n; ++i)
        if (indeg[i] == 0) ready.push_back(i);
    while (!ready.empty()) {
        const std::size_t v = ready.back();
        ready.pop_back();
        ix.topo.push_back(v);
        for (std::size_t c : ix.consumers[v])
            if (--indeg[c] == 0) ready.push_back(c);
    }
    if (ix.topo.size() != n) {
        // walk the residual subgraph to report a concrete back edge
        std::vector<int> mark(n, 0); // 0 unseen, 1 on stack, 2 done
        std::string back_edge;
        auto dfs = [&](auto&& self, std::size_t v) -> bool {
            mark[v] = 1;
            for (std::size_t c : ix.consumers[v]) {
                if (indeg[c] == 0) continue;
                if (mark[c] == 1) {
                    back_edge = "'" + g.nodes[v].id + "' -> '" + g.nodes[c].id + "'";
                    return true;
                }
                if (mark[c] == 0 && self(self, c)) return true;
            }
            mark[v] = 2;
            return false;
        };
        for (std::size_t i = 0; i < n && back_edge.empty(); ++i)
            if (indeg[i] > 0 && mark[i] == 0) dfs(dfs, i);
        throw GraphError("graph contains a cycle, back edge " + back_edge);
    }

    // Symbolic shape propagation. Streams carry (fixed, S); attention scores
    // carry (S, S).
    ix.shapes.resize(n);
    auto conflict = [&](std::size_t at, std::size_t src, const std::string& why) {
        throw ShapeError("shape conflict at node '" + g.nodes[at].id + "' from '" +
                         g.nodes[src].id + "': " + why);
    };
    for (std::size_t v : ix.topo) {
        const auto& node = g.nodes[v];
        const auto& in = ix.inputs[v];
        switch (node.kind) {
            case NodeKind::Input:
                ix.shapes[v] = {Dim::fixed(g.input_width), Dim::s()};
                break;
            case NodeKind::Linear: {
                const auto& wshape = g.parameters.at(node.weight);
                const auto& s = ix.shapes[in[0]];
                if (!(s.rows == Dim::fixed(wshape.first)))
                    conflict(v, in[0],
                             "linear expects " + std::to_string(wshape.first) + " rows, got " +
                                 s.rows.str());
                ix.shapes[v] = {Dim::fixed(wshape.second), s.cols};
                break;
            }
            case NodeKind::BiasAdd: {
                const auto& bshape = g.parameters.at(node.weight);
                if (bshape.second != 1)
                    throw GraphError("bias '" + node.weight + "' must be a column vector");
                const auto& s = ix.shapes[in[0]];
                if (!(s.rows == Dim::fixed(bshape.first)))
                    conflict(v, in[0],
                             "bias has " + std::to_string(bshape.first) + " rows, stream has " +
                                 s.rows.str());
                ix.shapes[v] = s;
                break;
            }
            case NodeKind::Activation:
            case NodeKind::SoftmaxRows:
            case NodeKind::LayerNorm:
                ix.shapes[v] = ix.shapes[in[0]];
                break;
            case NodeKind::ResidualAdd: {
                const auto& a = ix.shapes[in[0]];
                const auto& b = ix.shapes[in[1]];
                if (!(a.rows == b.rows) || !(a.cols == b.cols))
                    conflict(v, in[1], "residual operands " + a.str() + " vs " + b.str());
                ix.shapes[v] = a;
                break;
            }
            case NodeKind::AttentionScore: {
                const auto& q = ix.shapes[in[0]];
                const auto& k = ix.shapes[in[1]];
                if (!(q.rows == k.rows))
                    conflict(v, in[1], "query/key widths " + q.rows.str() + " vs " + k.rows.str());
                ix.shapes[v] = {q.cols, k.cols};
                break;
            }
            case NodeKind::MatMul: {
                const auto& stream = ix.shapes[in[0]];
                const auto& weights = ix.shapes[in[1]];
                if (!(stream.cols == weights.cols))
                    conflict(v, in[1],
                             "matmul stream cols " + stream.cols.str() + " vs weight cols " +
                                 weights.cols.str());
                ix.shapes[v] = {stream.rows, weights.rows};
                break;
            }
            case NodeKind::Output:
                ix.shapes[v] = ix.shapes[in[0]];
                break;
        }
    }
    return ix;
}

inline double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
}

// Shared forward pass; when `capture` is non-null it receives each site's
// input matrix indexed by site.
inline Matrix evaluate(const ModelInstance& inst, const GraphIndex& ix, const Matrix& input,
                       std::vector<Matrix>* capture) {
    const ModelGraph& g = inst.graph;
    if (input.rows() != g.input_width)
        throw ShapeError("forward: input has " + std::to_string(input.rows()) +
                         " rows, graph declares " + std::to_string(g.input_width));

    for (const auto& [name, shape] : g.parameters) {
        auto it = inst.parameters.find(name);
        if (it == inst.parameters.end())
            throw GraphError("instance is missing parameter '" + name + "'");
        if (it->second.rows() != shape.first || it->second.cols() != shape.second)
            throw ShapeError("parameter '" + name + "' is " + it->second.shape_str() +
                             ", declared " + std::to_string(shape.first) + "x" +
                             std::to_string(shape.second));
    }

    if (capture) capture->assign(ix.sites.size(), Matrix());

    std::vector<Matrix> value(g.nodes.size());
    for (std::size_t v : ix.topo) {
        const auto& node = g.nodes[v];
        const auto& in = ix.inputs[v];
        Matrix out;
        switch (node.kind) {
            case NodeKind::Input:
                out = input;
                break;
            case NodeKind::Linear: {
                const Matrix& x = value[in[0]];
                auto site_it = ix.site_of_node.find(v);
                if (site_it != ix.site_of_node.end() && capture)
                    (*capture)[site_it->second] = x;
                const Matrix& base = inst.parameters.at(node.weight);
                if (site_it != ix.site_of_node.end()) {
                    auto delta_it = inst.adapters.find(site_it->second);
                    if (delta_it != inst.adapters.end()) {
                        if (!delta_it->second.same_shape(base))
                            throw ShapeError("adapter at site " +
                                             std::to_string(site_it->second) + " is " +
                                             delta_it->second.shape_str() + ", weight is " +
                                             base.shape_str());
                        out = transpose_multiply(base + delta_it->second, x);
                        break;
                    }
                }
                out = transpose_multiply(base, x);
                break;
            }
            case NodeKind::BiasAdd: {
                out = value[in[0]];
                const Matrix& bias = inst.parameters.at(node.weight);
                if (bias.rows() != out.rows())
                    throw ShapeError("bias '" + node.weight + "' rows do not match stream at '" +
                                     node.id + "'");
                for (std::size_t i = 0; i < out.rows(); ++i) {
                    const double b = bias(i, 0);
                    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += b;
                }
                break;
            }
            case NodeKind::Activation: {
                out = value[in[0]];
                for (double& x : out.data()) {
                    switch (node.activation) {
                        case ActivationFn::Relu: x = x > 0.0 ? x : 0.0; break;
                        case ActivationFn::Gelu: x = gelu(x); break;
                        case ActivationFn::Tanh: x = std::tanh(x); break;
                    }
                }
                break;
            }
            case NodeKind::ResidualAdd:
                out = value[in[0]] + value[in[1]];
                break;
            case NodeKind::LayerNorm: {
                const Matrix& x = value[in[0]];
                out = Matrix(x.rows(), x.cols());
                const double d = static_cast<double>(x.rows());
                for (std::size_t j = 0; j < x.cols(); ++j) {
                    double mean = 0.0;
                    for (std::size_t i = 0; i < x.rows(); ++i) mean += x(i, j);
                    mean /= d;
                    double var = 0.0;
                    for (std::size_t i = 0; i < x.rows(); ++i) {
                        const double c = x(i, j) - mean;
                        var += c * c;
                    }
                    var /= d;
                    const double inv = 1.0 / std::sqrt(var + node.epsilon);
                    for (std::size_t i = 0; i < x.rows(); ++i) out(i, j) = (x(i, j) - mean) * inv;
                }
                break;
            }
            case NodeKind::AttentionScore: {
                const Matrix& q = value[in[0]];
                const Matrix& k = value[in[1]];
                if (q.rows() != k.rows())
                    throw ShapeError("attention_score at '" + node.id +
                                     "': query/key widths differ");
                out = transpose_multiply(q, k); // S_q x S_k
                out *= node.scale;
                break;
            }
            case NodeKind::SoftmaxRows: {
                out = value[in[0]];
                for (std::size_t i = 0; i < out.rows(); ++i) {
                    double* r = out.row(i);
                    double mx = r[0];
                    for (std::size_t j = 1; j < out.cols(); ++j) mx = std::max(mx, r[j]);
                    double sum = 0.0;
                    for (std::size_t j = 0; j < out.cols(); ++j) {
                        r[j] = std::exp(r[j] - mx);
                        sum += r[j];
                    }
                    for (std::size_t j = 0; j < out.cols(); ++j) r[j] /= sum;
                }
                break;
            }
            case NodeKind::MatMul: {
                const Matrix& stream = value[in[0]];
                const Matrix& weights = value[in[1]];
                out = multiply_transposed(stream, weights);
                break;
            }
            case NodeKind::Output:
                out = value[in[0]];
                break;
        }
        out.ensure_finite("node '" + node.id + "'");
        value[v] = std::move(out);
    }
    return value[ix.output_node];
}

} // namespace detail

// Validates structure, acyclicity and symbolic shape consistency.
// Returns node ids in a topological order.
inline std::vector<std::string> validate(const ModelGraph& graph) {
    const auto ix = detail::build_index(graph);
    std::vector<std::string> order;
    order.reserve(ix.topo.size());
    for (std::size_t v : ix.topo) order.push_back(graph.nodes[v].id);
    return order;
}

// Adapter sites in declaration order (dense SiteId indices).
inline std::vector<SiteInfo> sites(const ModelGraph& graph) {
    return detail::build_index(graph).sites;
}

inline Matrix forward(const ModelInstance& instance, const Matrix& input) {
    const auto ix = detail::build_index(instance.graph);
    return detail::evaluate(instance, ix, input, nullptr);
}

// Runs one forward pass per task and records, for every adapter site, the
// exact matrix fed into that site's linear transform. Outputs are identical
// to forward() alone. Result is indexed [task][site index].
inline std::vector<std::vector<FeatureBatch>> capture_features(
    const ModelInstance& instance, const std::vector<Matrix>& task_inputs) {
    const auto ix = detail::build_index(instance.graph);
    std::vector<std::vector<FeatureBatch>> result(task_inputs.size());
    for (std::size_t n = 0; n < task_inputs.size(); ++n) {
        std::vector<Matrix> captured;
        detail::evaluate(instance, ix, task_inputs[n], &captured);
        result[n].reserve(ix.sites.size());
        for (std::size_t j = 0; j < ix.sites.size(); ++j)
            result[n].push_back(FeatureBatch{n, ix.sites[j].id, std::move(captured[j])});
    }
    return result;
}

// Iteration bound from the derived site dependency graph: vertices are the
// input plus one vertex per adapter site (its feature input), with an edge
// A -> B iff a directed path A -> B exists in the computation graph. The
// longest path from the input, counted in site vertices, minus one, bounds
// the number of merge iterations after which every adapter is fixed.
inline std::size_t iteration_bound(const ModelGraph& graph) {
    const auto ix = detail::build_index(graph);
    if (ix.sites.empty()) throw DomainError("iteration_bound: graph has no adapter sites");

    // m[v] = max site vertices on any path from the input ending at v
    std::vector<std::size_t> m(graph.nodes.size(), 0);
    std::size_t best = 0;
    for (std::size_t v : ix.topo) {
        std::size_t longest_in = 0;
        for (std::size_t u : ix.inputs[v]) longest_in = std::max(longest_in, m[u]);
        m[v] = longest_in + (ix.site_of_node.count(v) ? 1 : 0);
        best = std::max(best, m[v]);
    }
    return best - 1;
}

} // namespace iteris
