#ifndef OVERMIND_GRAPH_HPP
#define OVERMIND_GRAPH_HPP

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "overmind/errors.hpp"

namespace overmind::graph {

enum class DType : std::uint8_t { F32 = 0, I8 = 1, I32 = 2 };

inline std::size_t dtype_bytes(DType d) { return d == DType::I8 ? 1 : 4; }

inline std::string dtype_name(DType d) {
  switch (d) {
    case DType::F32: return "f32";
    case DType::I8: return "i8";
    case DType::I32: return "i32";
  }
  return "?";
}

struct TensorMeta {
  std::string id;
  std::vector<std::size_t> shape;
  std::vector<std::size_t> strides;  // element strides, row-major default
  DType dtype = DType::F32;
  std::size_t base_addr = 0;

  std::size_t elem_count() const {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }
  std::size_t byte_size() const { return elem_count() * dtype_bytes(dtype); }
  // Row/column view: dim 0 is the row dimension, trailing dims flatten into columns.
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.empty() ? 1 : elem_count() / shape[0]; }
};

inline std::vector<std::size_t> row_major_strides(const std::vector<std::size_t>& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

enum class OpKind : std::uint8_t {
  MatMul = 0,
  Conv2D,
  ElemAdd,
  ElemMul,
  Activation,
  CircularConv,
  SimilaritySearch,
  FuzzyAnd,
  FuzzyOr,
  FuzzyNot,
};

inline const char* kind_name(OpKind k) {
  switch (k) {
    case OpKind::MatMul: return "MatMul";
    case OpKind::Conv2D: return "Conv2D";
    case OpKind::ElemAdd: return "ElemAdd";
    case OpKind::ElemMul: return "ElemMul";
    case OpKind::Activation: return "Activation";
    case OpKind::CircularConv: return "CircularConv";
    case OpKind::SimilaritySearch: return "SimilaritySearch";
    case OpKind::FuzzyAnd: return "FuzzyAnd";
    case OpKind::FuzzyOr: return "FuzzyOr";
    case OpKind::FuzzyNot: return "FuzzyNot";
  }
  return "?";
}

inline OpKind kind_from_name(const std::string& s) {
  static const std::map<std::string, OpKind> table = {
      {"MatMul", OpKind::MatMul},       {"Conv2D", OpKind::Conv2D},
      {"ElemAdd", OpKind::ElemAdd},     {"ElemMul", OpKind::ElemMul},
      {"Activation", OpKind::Activation}, {"CircularConv", OpKind::CircularConv},
      {"SimilaritySearch", OpKind::SimilaritySearch}, {"FuzzyAnd", OpKind::FuzzyAnd},
      {"FuzzyOr", OpKind::FuzzyOr},     {"FuzzyNot", OpKind::FuzzyNot}};
  auto it = table.find(s);
  if (it == table.end()) throw UnknownOperator("'" + s + "'");
  return it->second;
}

struct OpNode {
  std::string id;
  OpKind kind = OpKind::ElemAdd;
  std::vector<std::string> inputs;
  std::string output;
  // Kind-specific attributes: Conv2D stride; CircularConv N; Activation fn;
  // SimilaritySearch metric ("dot" | "cosine").
  std::map<std::string, nlohmann::json> attrs;

  std::size_t attr_uint(const std::string& key, std::size_t fallback) const {
    auto it = attrs.find(key);
    return it == attrs.end() ? fallback : it->second.get<std::size_t>();
  }
  std::string attr_str(const std::string& key, const std::string& fallback) const {
    auto it = attrs.find(key);
    return it == attrs.end() ? fallback : it->second.get<std::string>();
  }
};

struct Graph {
  std::map<std::string, TensorMeta> tensors;
  std::vector<OpNode> nodes;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

struct WorkloadProfile {
  std::size_t linear_op_count = 0;
  std::size_t nonlinear_op_count = 0;
  std::size_t neural_op_count = 0;
  std::size_t symbolic_op_count = 0;
  double linear_pct = 0, nonlinear_pct = 0, neural_pct = 0, symbolic_pct = 0;
};

namespace detail {

inline std::size_t expected_arity(OpKind k) {
  switch (k) {
    case OpKind::Activation:
    case OpKind::FuzzyNot: return 1;
    default: return 2;
  }
}

inline void validate_node(const Graph& g, const OpNode& node, std::size_t idx) {
  std::string base = "nodes[" + std::to_string(idx) + "]";
  if (node.inputs.size() != expected_arity(node.kind))
    throw ParseError(base + ".inputs", std::string(kind_name(node.kind)) + " expects " +
                                           std::to_string(expected_arity(node.kind)) + " inputs");
  for (std::size_t i = 0; i < node.inputs.size(); ++i)
    if (!g.tensors.count(node.inputs[i]))
      throw ParseError(base + ".inputs[" + std::to_string(i) + "]",
                       "undeclared tensor '" + node.inputs[i] + "'");
  if (!g.tensors.count(node.output))
    throw ParseError(base + ".output", "undeclared tensor '" + node.output + "'");

  auto shape_of = [&](std::size_t i) { return g.tensors.at(node.inputs[i]).shape; };
  const TensorMeta& out = g.tensors.at(node.output);
  switch (node.kind) {
    case OpKind::MatMul: {
      auto a = shape_of(0), b = shape_of(1);
      if (a.size() != 2 || b.size() != 2 || a[1] != b[0])
        throw ParseError(base, "MatMul shape mismatch");
      if (out.shape != std::vector<std::size_t>{a[0], b[1]})
        throw ParseError(base + ".output", "MatMul output shape mismatch");
      break;
    }
    case OpKind::Conv2D: {
      auto in = shape_of(0), ker = shape_of(1);
      std::size_t stride = node.attr_uint("stride", 1);
      if (in.size() != 2 || ker.size() != 2 || ker[0] > in[0] || ker[1] > in[1] || stride < 1)
        throw ParseError(base, "Conv2D shape mismatch");
      std::vector<std::size_t> want{(in[0] - ker[0]) / stride + 1, (in[1] - ker[1]) / stride + 1};
      if (out.shape != want) throw ParseError(base + ".output", "Conv2D output shape mismatch");
      break;
    }
    case OpKind::ElemAdd:
    case OpKind::ElemMul:
    case OpKind::FuzzyAnd:
    case OpKind::FuzzyOr:
      if (shape_of(0) != shape_of(1) || out.shape != shape_of(0))
        throw ParseError(base, "elementwise shape mismatch");
      break;
    case OpKind::Activation:
    case OpKind::FuzzyNot:
      if (out.shape != shape_of(0)) throw ParseError(base, "elementwise shape mismatch");
      break;
    case OpKind::CircularConv: {
      std::size_t n = node.attr_uint("N", 0);
      auto a = shape_of(0), b = shape_of(1);
      if (n == 0) throw ParseError(base + ".attrs.N", "CircularConv requires attrs.N");
      auto len = [](const std::vector<std::size_t>& s) {
        std::size_t e = 1;
        for (auto d : s) e *= d;
        return e;
      };
      if (len(a) != n || len(b) != n || len(out.shape) != n)
        throw ParseError(base, "CircularConv operands must share length N=" + std::to_string(n));
      break;
    }
    case OpKind::SimilaritySearch: {
      auto q = shape_of(0), cb = shape_of(1);
      if (q.size() != 2 || cb.size() != 2 || q[1] != cb[1])
        throw ParseError(base, "codebook row length must equal query length");
      if (out.shape != std::vector<std::size_t>{q[0]})
        throw ParseError(base + ".output", "SimilaritySearch output must be [num_queries]");
      break;
    }
  }
}

}  // namespace detail

inline void validate(const Graph& g) {
  std::map<std::string, std::size_t> producers;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (producers.count(g.nodes[i].output))
      throw ParseError("nodes[" + std::to_string(i) + "].output",
                       "tensor '" + g.nodes[i].output + "' has multiple producers");
    producers[g.nodes[i].output] = i;
  }
  std::set<std::string> graph_inputs(g.inputs.begin(), g.inputs.end());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    detail::validate_node(g, g.nodes[i], i);
    for (std::size_t j = 0; j < g.nodes[i].inputs.size(); ++j) {
      const std::string& t = g.nodes[i].inputs[j];
      if (!graph_inputs.count(t) && !producers.count(t))
        throw ParseError("nodes[" + std::to_string(i) + "].inputs[" + std::to_string(j) + "]",
                         "tensor '" + t + "' is neither a graph input nor produced");
    }
  }
}

inline Graph parse_graph(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("$", e.what());
  }
  Graph g;
  if (!doc.contains("tensors") || !doc["tensors"].is_array()) throw ParseError("tensors");
  if (!doc.contains("nodes") || !doc["nodes"].is_array()) throw ParseError("nodes");
  for (std::size_t i = 0; i < doc["tensors"].size(); ++i) {
    const auto& jt = doc["tensors"][i];
    std::string base = "tensors[" + std::to_string(i) + "]";
    TensorMeta m;
    try {
      m.id = jt.at("id").get<std::string>();
      m.shape = jt.at("shape").get<std::vector<std::size_t>>();
      std::string dt = jt.value("dtype", "f32");
      if (dt == "f32") m.dtype = DType::F32;
      else if (dt == "i8") m.dtype = DType::I8;
      else if (dt == "i32") m.dtype = DType::I32;
      else throw ParseError(base + ".dtype", "unknown dtype '" + dt + "'");
      m.base_addr = jt.value("base_addr", 0u);
      if (jt.contains("strides")) m.strides = jt["strides"].get<std::vector<std::size_t>>();
      else m.strides = row_major_strides(m.shape);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(base, e.what());
    }
    for (std::size_t d : m.shape)
      if (d < 1) throw ParseError(base + ".shape", "dims must be >= 1");
    if (m.strides.size() != m.shape.size())
      throw ParseError(base + ".strides", "rank mismatch");
    if (g.tensors.count(m.id)) throw ParseError(base + ".id", "duplicate tensor id");
    g.tensors[m.id] = std::move(m);
  }
  for (std::size_t i = 0; i < doc["nodes"].size(); ++i) {
    const auto& jn = doc["nodes"][i];
    std::string base = "nodes[" + std::to_string(i) + "]";
    OpNode n;
    try {
      n.id = jn.at("id").get<std::string>();
      n.kind = kind_from_name(jn.at("kind").get<std::string>());
      n.inputs = jn.at("inputs").get<std::vector<std::string>>();
      n.output = jn.at("output").get<std::string>();
      if (jn.contains("attrs"))
        for (auto it = jn["attrs"].begin(); it != jn["attrs"].end(); ++it)
          n.attrs[it.key()] = it.value();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(base, e.what());
    }
    g.nodes.push_back(std::move(n));
  }
  g.inputs = doc.value("inputs", std::vector<std::string>{});
  g.outputs = doc.value("outputs", std::vector<std::string>{});
  for (std::size_t i = 0; i < g.inputs.size(); ++i)
    if (!g.tensors.count(g.inputs[i])) throw ParseError("inputs[" + std::to_string(i) + "]");
  for (std::size_t i = 0; i < g.outputs.size(); ++i)
    if (!g.tensors.count(g.outputs[i])) throw ParseError("outputs[" + std::to_string(i) + "]");
  validate(g);
  return g;
}

inline std::string serialize_graph(const Graph& g) {
  nlohmann::json doc;
  doc["tensors"] = nlohmann::json::array();
  for (const auto& [id, m] : g.tensors) {
    nlohmann::json jt{{"id", id}, {"shape", m.shape}, {"dtype", dtype_name(m.dtype)},
                      {"strides", m.strides}, {"base_addr", m.base_addr}};
    doc["tensors"].push_back(std::move(jt));
  }
  doc["nodes"] = nlohmann::json::array();
  for (const auto& n : g.nodes) {
    nlohmann::json jn{{"id", n.id}, {"kind", kind_name(n.kind)}, {"inputs", n.inputs},
                      {"output", n.output}};
    if (!n.attrs.empty()) {
      nlohmann::json a = nlohmann::json::object();
      for (const auto& [k, v] : n.attrs) a[k] = v;
      jn["attrs"] = std::move(a);
    }
    doc["nodes"].push_back(std::move(jn));
  }
  doc["inputs"] = g.inputs;
  doc["outputs"] = g.outputs;
  return doc.dump(2);
}

// Deterministic DFS post-order over graph outputs (declaration order),
// falling back to declaration order for nodes unreachable from outputs.
inline std::vector<const OpNode*> topo_order(const Graph& g) {
  std::map<std::string, const OpNode*> producer;
  for (const auto& n : g.nodes) producer[n.output] = &n;
  enum class Mark { None, InProgress, Done };
  std::map<const OpNode*, Mark> marks;
  std::vector<const OpNode*> order;
  auto visit = [&](auto&& self, const OpNode* n) -> void {
    Mark& m = marks[n];
    if (m == Mark::Done) return;
    if (m == Mark::InProgress)
      throw CyclicGraph("back-edge into node '" + n->id + "'");
    m = Mark::InProgress;
    for (const auto& in : n->inputs) {
      auto it = producer.find(in);
      if (it != producer.end()) self(self, it->second);
    }
    marks[n] = Mark::Done;
    order.push_back(n);
  };
  for (const auto& out : g.outputs) {
    auto it = producer.find(out);
    if (it != producer.end()) visit(visit, it->second);
  }
  for (const auto& n : g.nodes) visit(visit, &n);
  return order;
}

// Static scalar-op estimate per node: MatMul M*N*K, Conv2D out*kh*kw,
// CircularConv N^2, SimilaritySearch rows*len, elementwise N.
inline std::size_t node_op_estimate(const Graph& g, const OpNode& n) {
  const TensorMeta& out = g.tensors.at(n.output);
  switch (n.kind) {
    case OpKind::MatMul: {
      const auto& a = g.tensors.at(n.inputs[0]).shape;
      const auto& b = g.tensors.at(n.inputs[1]).shape;
      return a[0] * a[1] * b[1];
    }
    case OpKind::Conv2D: {
      const auto& ker = g.tensors.at(n.inputs[1]).shape;
      return out.elem_count() * ker[0] * ker[1];
    }
    case OpKind::CircularConv: {
      std::size_t N = n.attr_uint("N", out.elem_count());
      return N * N;
    }
    case OpKind::SimilaritySearch: {
      const auto& q = g.tensors.at(n.inputs[0]).shape;
      const auto& cb = g.tensors.at(n.inputs[1]).shape;
      return q[0] * cb[0] * cb[1];
    }
    default:
      return g.tensors.at(n.inputs[0]).elem_count();
  }
}

inline WorkloadProfile profile(const Graph& g) {
  WorkloadProfile p;
  for (const auto& n : g.nodes) {
    std::size_t ops = node_op_estimate(g, n);
    switch (n.kind) {
      case OpKind::MatMul:
      case OpKind::Conv2D:
        p.linear_op_count += ops;
        p.neural_op_count += ops;
        break;
      case OpKind::ElemAdd:
      case OpKind::ElemMul:
        p.linear_op_count += ops;
        break;
      case OpKind::Activation:
        p.nonlinear_op_count += ops;
        p.neural_op_count += ops;
        break;
      case OpKind::CircularConv:
      case OpKind::SimilaritySearch:
        p.symbolic_op_count += ops;
        break;
      case OpKind::FuzzyAnd:
      case OpKind::FuzzyOr:
      case OpKind::FuzzyNot:
        p.nonlinear_op_count += ops;
        p.symbolic_op_count += ops;
        break;
    }
  }
  auto pct = [](std::size_t x, std::size_t total) {
    return total ? 100.0 * static_cast<double>(x) / static_cast<double>(total) : 0.0;
  };
  p.linear_pct = pct(p.linear_op_count, p.linear_op_count + p.nonlinear_op_count);
  p.nonlinear_pct = pct(p.nonlinear_op_count, p.linear_op_count + p.nonlinear_op_count);
  p.neural_pct = pct(p.neural_op_count, p.neural_op_count + p.symbolic_op_count);
  p.symbolic_pct = pct(p.symbolic_op_count, p.neural_op_count + p.symbolic_op_count);
  return p;
}

}  // namespace overmind::graph

#endif
