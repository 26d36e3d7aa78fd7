#ifndef OVERMIND_COMPILER_HPP
#define OVERMIND_COMPILER_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "overmind/errors.hpp"
#include "overmind/graph.hpp"
#include "overmind/isa.hpp"
#include "overmind/pade.hpp"

namespace overmind::compiler {

using graph::Graph;
using graph::OpKind;
using graph::OpNode;
using graph::TensorMeta;
using isa::AddressWindowConfig;
using isa::InstructionBundle;
using isa::Opcode;
using isa::PEConfig;
using isa::Placement;
using isa::Program;

struct HwConfig {
  std::size_t rows = 32;   // R
  std::size_t cols = 16;   // C
  std::size_t sram_bytes = 32768;
  std::size_t ddr_bytes = 1ull << 30;  // capacity model only
  std::size_t divider_latency = 8;
  std::size_t broadcast_width = 16;  // elements per cycle on the shared bus
  std::size_t ddr_latency = 64;
  std::size_t ddr_bandwidth = 4;  // elements per cycle
};

struct CompileOptions {
  double target_mae = 1e-3;
  std::map<std::string, double> per_function_target;
  std::size_t max_pade_k = 8;
  std::size_t forced_k = 0;  // nonzero: fit exactly (k,k), skip order search
  pade::FitConfig fit;
};

inline Opcode opcode_for(OpKind k) {
  switch (k) {
    case OpKind::MatMul: return Opcode::MatMul;
    case OpKind::Conv2D: return Opcode::Conv2D;
    case OpKind::ElemAdd: return Opcode::ElemAdd;
    case OpKind::ElemMul: return Opcode::ElemMul;
    case OpKind::Activation: return Opcode::PadeActivate;
    case OpKind::CircularConv: return Opcode::CircularConv;
    case OpKind::SimilaritySearch: return Opcode::SimilaritySearch;
    case OpKind::FuzzyAnd: return Opcode::FuzzyAnd;
    case OpKind::FuzzyOr: return Opcode::FuzzyOr;
    case OpKind::FuzzyNot: return Opcode::FuzzyNot;
  }
  throw UnknownOperator("unmapped op kind");
}

// --- memory placement -----------------------------------------------------

// Greedy: multi-consumer tensors into SRAM by (reuse desc, size asc, id asc)
// until capacity; single-use streams to DDR. Static for the whole program.
inline std::map<std::string, Placement> place_memory(const Graph& g, const HwConfig& hw) {
  std::map<std::string, std::size_t> reuse;
  for (const auto& n : g.nodes)
    for (const auto& t : n.inputs) reuse[t]++;
  std::map<std::string, Placement> placement;
  for (const auto& [id, meta] : g.tensors) {
    if (meta.byte_size() > hw.ddr_bytes && meta.byte_size() > hw.sram_bytes)
      throw PlacementError("tensor '" + id + "' exceeds memory model capacity");
    placement[id] = Placement::Ddr;
  }
  struct Cand {
    std::size_t reuse;
    std::size_t size;
    std::string id;
  };
  std::vector<Cand> cands;
  for (const auto& [id, cnt] : reuse)
    if (cnt >= 2) cands.push_back({cnt, g.tensors.at(id).byte_size(), id});
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.reuse != b.reuse) return a.reuse > b.reuse;
    if (a.size != b.size) return a.size < b.size;
    return a.id < b.id;
  });
  std::size_t used = 0;
  for (const auto& c : cands) {
    if (used + c.size <= hw.sram_bytes) {
      placement[c.id] = Placement::Sram;
      used += c.size;
    }
  }
  return placement;
}

// --- window computation ---------------------------------------------------

// Which input the per-row filters partition: the rotated operand for circular
// convolution, the row-major first input otherwise.
inline std::size_t partitioned_input(OpKind k) {
  return k == OpKind::CircularConv ? 1 : 0;
}

struct WindowPlan {
  std::vector<AddressWindowConfig> windows;
  std::vector<std::uint8_t> mask;
  std::size_t rows_used = 0;
};

// Output row count driving PE-row assignment (tiled into ceil(rows/R) bundles).
inline std::size_t output_row_count(const Graph& g, const OpNode& node) {
  const TensorMeta& out = g.tensors.at(node.output);
  if (node.kind == OpKind::CircularConv) return node.attr_uint("N", out.elem_count());
  return out.rows();
}

// Windows for output rows [row_base, row_base + count) of `node`.
inline WindowPlan compute_windows(const OpNode& node, const std::map<std::string, TensorMeta>& metas,
                                  const HwConfig& hw, std::size_t row_base = 0,
                                  std::size_t count = SIZE_MAX) {
  const TensorMeta& part = metas.at(node.inputs[partitioned_input(node.kind)]);
  const TensorMeta& out = metas.at(node.output);
  std::size_t total_rows =
      node.kind == OpKind::CircularConv ? node.attr_uint("N", out.elem_count()) : out.rows();
  std::size_t n = std::min({count, hw.rows, total_rows - row_base});
  WindowPlan plan;
  plan.rows_used = n;
  plan.mask.assign((hw.rows + 7) / 8, 0);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t out_row = row_base + r;
    AddressWindowConfig w;
    switch (node.kind) {
      case OpKind::CircularConv: {
        std::size_t N = node.attr_uint("N", out.elem_count());
        w.batch_start = static_cast<std::uint32_t>((part.base_addr + out_row) % N);
        w.row_lo = w.row_hi = static_cast<std::uint32_t>(out_row);
        w.col_lo = 0;
        w.col_hi = static_cast<std::uint32_t>(N - 1);
        w.circ_offset = static_cast<std::uint32_t>(out_row % N);
        w.modulus = static_cast<std::uint32_t>(N);
        break;
      }
      case OpKind::Conv2D: {
        std::size_t stride = node.attr_uint("stride", 1);
        const TensorMeta& ker = metas.at(node.inputs[1]);
        std::size_t wo = out.shape[1];
        w.row_lo = static_cast<std::uint32_t>(out_row * stride);
        w.row_hi = static_cast<std::uint32_t>(out_row * stride + ker.shape[0] - 1);
        w.col_lo = 0;
        w.col_hi = static_cast<std::uint32_t>((wo - 1) * stride + ker.shape[1] - 1);
        w.batch_start = static_cast<std::uint32_t>(part.base_addr + w.row_lo * part.cols());
        break;
      }
      default: {
        // Row-partitioned: PE row takes the matching row slice of the input.
        w.row_lo = w.row_hi = static_cast<std::uint32_t>(out_row);
        w.col_lo = 0;
        w.col_hi = static_cast<std::uint32_t>(part.cols() - 1);
        w.batch_start = static_cast<std::uint32_t>(part.base_addr + out_row * part.cols());
        break;
      }
    }
    plan.windows.push_back(w);
    plan.mask[r / 8] = static_cast<std::uint8_t>(plan.mask[r / 8] | (1u << (r % 8)));
  }
  return plan;
}

// --- Padé planning --------------------------------------------------------

struct PadePlan {
  pade::PadeApproximant approx;
  PEConfig pe;
};

inline PadePlan plan_pade(const OpNode& node, const CompileOptions& opts, const HwConfig& hw) {
  std::string fn = node.attr_str("fn", "tanh");
  pade::FunctionSpec spec = pade::builtin_spec(fn);
  pade::Interval range = spec.default_range;
  std::size_t hw_max_k = std::max<std::size_t>(1, hw.cols / 2);
  pade::PadeApproximant approx;
  if (opts.forced_k > 0) {
    std::size_t k = std::min(opts.forced_k, hw_max_k);
    if (opts.fit.method == pade::FitMethod::TaylorMatch) {
      if (!spec.taylor) throw DegenerateFit("no taylor provider for " + fn);
      approx = pade::fit_taylor_pade(spec.taylor(0.0, 2 * k + 1), k, k, range, opts.fit.pole_epsilon);
      approx.function_id = fn;
    } else {
      approx = pade::fit_least_squares(spec, k, k, range, opts.fit);
    }
  } else {
    double target = opts.target_mae;
    auto it = opts.per_function_target.find(fn);
    if (it != opts.per_function_target.end()) target = it->second;
    try {
      approx = pade::select_order(spec, target, range, std::min(opts.max_pade_k, hw_max_k), opts.fit);
    } catch (const TargetUnreachable& e) {
      throw TargetUnreachable(std::string(e.what()) + " (node '" + node.id + "')");
    }
  }
  std::size_t k = approx.m;
  PEConfig pe;
  pe.cols_used = static_cast<std::uint16_t>(2 * k);
  pe.threads_per_row = static_cast<std::uint16_t>(std::max<std::size_t>(1, hw.cols / (2 * k)));
  pe.pade_order = static_cast<std::uint16_t>(k);
  pe.divider_enabled = true;
  return {std::move(approx), pe};
}

// --- lowering -------------------------------------------------------------

namespace detail {

inline isa::OperandDesc describe(const TensorMeta& m, Placement pl) {
  isa::OperandDesc d;
  d.id = m.id;
  d.dtype = m.dtype;
  d.placement = pl;
  d.base_addr = static_cast<std::uint32_t>(m.base_addr);
  for (auto s : m.shape) d.shape.push_back(static_cast<std::uint32_t>(s));
  for (auto s : m.strides) d.strides.push_back(static_cast<std::uint32_t>(s));
  return d;
}

inline std::size_t linear_lanes(const Graph& g, const OpNode& node, const HwConfig& hw) {
  switch (node.kind) {
    case OpKind::MatMul: return std::min(hw.cols, g.tensors.at(node.inputs[0]).shape[1]);
    case OpKind::Conv2D: {
      const auto& ker = g.tensors.at(node.inputs[1]).shape;
      return std::min(hw.cols, ker[0] * ker[1]);
    }
    case OpKind::CircularConv:
      return std::min(hw.cols, static_cast<std::size_t>(node.attr_uint("N", 1)));
    case OpKind::SimilaritySearch:
      return std::min(hw.cols, g.tensors.at(node.inputs[0]).shape[1]);
    default:
      return std::min(hw.cols, g.tensors.at(node.output).cols());
  }
}

}  // namespace detail

inline Program lower(const Graph& g, const HwConfig& hw, const CompileOptions& opts = {}) {
  graph::validate(g);
  auto placement = place_memory(g, hw);
  Program p;
  p.header.version = 1;
  p.header.rows = static_cast<std::uint16_t>(hw.rows);
  p.header.cols = static_cast<std::uint16_t>(hw.cols);
  p.header.sram_bytes = static_cast<std::uint32_t>(hw.sram_bytes);
  for (const OpNode* node : graph::topo_order(g)) {
    std::size_t total_rows = output_row_count(g, *node);
    PadePlan pade_plan;
    if (node->kind == OpKind::Activation) pade_plan = plan_pade(*node, opts, hw);
    for (std::size_t row_base = 0; row_base < total_rows; row_base += hw.rows) {
      WindowPlan wp = compute_windows(*node, g.tensors, hw, row_base, hw.rows);
      InstructionBundle b;
      b.opcode = opcode_for(node->kind);
      for (const auto& in : node->inputs)
        b.operands.push_back(detail::describe(g.tensors.at(in), placement.at(in)));
      b.operands.push_back(detail::describe(g.tensors.at(node->output), placement.at(node->output)));
      b.windows = std::move(wp.windows);
      b.row_enable_mask = std::move(wp.mask);
      if (node->kind == OpKind::Activation) {
        b.pe_config = pade_plan.pe;
        b.pe_config.rows_used = static_cast<std::uint16_t>(wp.rows_used);
        for (double c : pade_plan.approx.a) b.pade_a.push_back(static_cast<float>(c));
        for (double c : pade_plan.approx.b) b.pade_b.push_back(static_cast<float>(c));
      } else {
        b.pe_config.rows_used = static_cast<std::uint16_t>(wp.rows_used);
        b.pe_config.cols_used = static_cast<std::uint16_t>(detail::linear_lanes(g, *node, hw));
        b.pe_config.threads_per_row = 1;
        b.pe_config.pade_order = 0;
        b.pe_config.divider_enabled = false;
      }
      if (row_base > 0) b.attrs["row_base"] = static_cast<double>(row_base);
      if (node->kind == OpKind::Conv2D) b.attrs["stride"] = static_cast<double>(node->attr_uint("stride", 1));
      if (node->kind == OpKind::CircularConv) b.attrs["N"] = static_cast<double>(node->attr_uint("N", 0));
      if (node->kind == OpKind::SimilaritySearch && node->attr_str("metric", "dot") == "cosine")
        b.attrs["cosine"] = 1.0;
      p.bundles.push_back(std::move(b));
    }
  }
  return p;
}

// Approximants selected during lowering, keyed by activation function id.
// Useful for running the reference executor with matching semantics.
inline std::map<std::string, pade::PadeApproximant> planned_approximants(
    const Graph& g, const HwConfig& hw, const CompileOptions& opts = {}) {
  std::map<std::string, pade::PadeApproximant> out;
  for (const auto& node : g.nodes) {
    if (node.kind != OpKind::Activation) continue;
    std::string fn = node.attr_str("fn", "tanh");
    if (!out.count(fn)) out[fn] = plan_pade(node, opts, hw).approx;
  }
  return out;
}

// Round coefficients through the f32 bundle payload so a host-side reference
// matches the machine bit for bit.
inline pade::PadeApproximant approx_from_bundle(const InstructionBundle& b) {
  pade::PadeApproximant p;
  p.m = b.pade_a.empty() ? 0 : b.pade_a.size() - 1;
  p.n = b.pade_b.size();
  for (float c : b.pade_a) p.a.push_back(static_cast<double>(c));
  for (float c : b.pade_b) p.b.push_back(static_cast<double>(c));
  return p;
}

}  // namespace overmind::compiler

#endif
