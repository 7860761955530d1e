#pragma once

// Graph description file (JSON):
//
// {
//   "input_width": 8,
//   "nodes": [
//     {"id": "in",   "kind": "input"},
//     {"id": "proj", "kind": "linear", "inputs": ["in"], "weight": "w",
//      "site": "proj"},
//     {"id": "act",  "kind": "activation", "inputs": ["proj"], "fn": "relu"},
//     {"id": "out",  "kind": "output", "inputs": ["act"]}
//   ],
//   "parameters": {"w": [8, 8]}
// }
//
// Optional per-kind fields: "fn" (activation), "epsilon" (layer_norm),
// "scale" (attention_score), "site" (linear). Node order is significant:
// site indices are assigned densely in declaration order. Round-trips are
// lossless; loading a saved graph and saving it again is byte-identical.

#include <filesystem>
#include <string>

#include "json.hpp"

#include "iteris/bundle.hpp"
#include "iteris/errors.hpp"
#include "iteris/graph.hpp"

namespace iteris {

namespace detail {

inline NodeKind node_kind_from_name(const std::string& name) {
    if (name == "input") return NodeKind::Input;
    if (name == "linear") return NodeKind::Linear;
    if (name == "bias_add") return NodeKind::BiasAdd;
    if (name == "activation") return NodeKind::Activation;
    if (name == "residual_add") return NodeKind::ResidualAdd;
    if (name == "layer_norm") return NodeKind::LayerNorm;
    if (name == "attention_score") return NodeKind::AttentionScore;
    if (name == "softmax_rows") return NodeKind::SoftmaxRows;
    if (name == "matmul") return NodeKind::MatMul;
    if (name == "output") return NodeKind::Output;
    throw ConfigError("graph: unknown node kind '" + name + "'");
}

inline const char* activation_name(ActivationFn fn) {
    switch (fn) {
        case ActivationFn::Relu: return "relu";
        case ActivationFn::Gelu: return "gelu";
        case ActivationFn::Tanh: return "tanh";
    }
    return "?";
}

inline ActivationFn activation_from_name(const std::string& name) {
    if (name == "relu") return ActivationFn::Relu;
    if (name == "gelu") return ActivationFn::Gelu;
    if (name == "tanh") return ActivationFn::Tanh;
    throw ConfigError("graph: unknown activation '" + name + "'");
}

} // namespace detail

inline nlohmann::json graph_to_json(const ModelGraph& graph) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const NodeSpec& node : graph.nodes) {
        nlohmann::json j;
        j["id"] = node.id;
        j["kind"] = detail::kind_name(node.kind);
        if (!node.inputs.empty()) j["inputs"] = node.inputs;
        switch (node.kind) {
            case NodeKind::Linear:
                j["weight"] = node.weight;
                if (node.site_label) j["site"] = *node.site_label;
                break;
            case NodeKind::BiasAdd:
                j["bias"] = node.weight;
                break;
            case NodeKind::Activation:
                j["fn"] = detail::activation_name(node.activation);
                break;
            case NodeKind::LayerNorm:
                j["epsilon"] = node.epsilon;
                break;
            case NodeKind::AttentionScore:
                j["scale"] = node.scale;
                break;
            default:
                break;
        }
        nodes.push_back(std::move(j));
    }
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [name, shape] : graph.parameters)
        params[name] = {shape.first, shape.second};
    return nlohmann::json{
        {"input_width", graph.input_width}, {"nodes", nodes}, {"parameters", params}};
}

inline ModelGraph graph_from_json(const nlohmann::json& j) try {
    if (!j.is_object() || !j.contains("input_width") || !j.contains("nodes"))
        throw ConfigError("graph: expected an object with input_width and nodes");
    ModelGraph g;
    g.input_width = j["input_width"].get<std::size_t>();
    const nlohmann::json params = j.value("parameters", nlohmann::json::object());
    for (const auto& [name, shape] : params.items()) {
        if (!shape.is_array() || shape.size() != 2)
            throw ConfigError("graph: parameter '" + name + "' shape must be [rows, cols]");
        g.parameters[name] = {shape[0].get<std::size_t>(), shape[1].get<std::size_t>()};
    }
    for (const auto& node_json : j["nodes"]) {
        NodeSpec node;
        node.id = node_json.at("id").get<std::string>();
        node.kind = detail::node_kind_from_name(node_json.at("kind").get<std::string>());
        for (const auto& ref : node_json.value("inputs", nlohmann::json::array()))
            node.inputs.push_back(ref.get<std::string>());
        switch (node.kind) {
            case NodeKind::Linear:
                node.weight = node_json.at("weight").get<std::string>();
                if (node_json.contains("site"))
                    node.site_label = node_json["site"].get<std::string>();
                break;
            case NodeKind::BiasAdd:
                node.weight = node_json.at("bias").get<std::string>();
                break;
            case NodeKind::Activation:
                node.activation =
                    detail::activation_from_name(node_json.value("fn", std::string("relu")));
                break;
            case NodeKind::LayerNorm:
                node.epsilon = node_json.value("epsilon", 1e-5);
                break;
            case NodeKind::AttentionScore:
                node.scale = node_json.value("scale", 1.0);
                break;
            default:
                break;
        }
        g.nodes.push_back(std::move(node));
    }
    return g;
} catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("graph: ") + e.what());
}

inline void save_graph(const ModelGraph& graph, const std::filesystem::path& path) {
    detail::atomic_write(path, graph_to_json(graph).dump(2) + "\n");
}

inline ModelGraph load_graph(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("graph '" + path.string() + "': malformed JSON: " + e.what());
    }
    return graph_from_json(j);
}

} // namespace iteris
