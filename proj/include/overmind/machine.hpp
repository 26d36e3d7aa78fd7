#ifndef OVERMIND_MACHINE_HPP
#define OVERMIND_MACHINE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "overmind/compiler.hpp"
#include "overmind/errors.hpp"
#include "overmind/isa.hpp"
#include "overmind/pade.hpp"
#include "overmind/refexec.hpp"

namespace overmind::machine {

using compiler::HwConfig;
using isa::AddressWindowConfig;
using isa::InstructionBundle;
using isa::Opcode;
using isa::OperandDesc;
using isa::Placement;
using isa::Program;
using refexec::Precision;
using refexec::QuantMap;
using refexec::TensorValue;

enum class Mode { Bypass, TwoLevelBaseline };
enum class CircImpl { AddressOffset, ShiftRegisterBaseline };

struct SimConfig {
  HwConfig hw;
  Mode mode = Mode::Bypass;
  CircImpl circ_impl = CircImpl::AddressOffset;
  std::size_t l2_block_elems = 256;     // baseline only
  std::size_t l2_transfer_width = 16;   // baseline only, elements per cycle
  std::size_t mac_latency = 1;          // pipelined
  std::size_t divider_pipeline_depth = 8;  // pipelined, 1/cycle throughput
  Precision precision = Precision::F32;
  QuantMap quant;  // required for Int8
  bool trace = false;
};

// Per-row filter registers, loaded by pre-decode before the row's first
// broadcast cycle of the bundle.
struct FilterState {
  AddressWindowConfig win;
  std::uint32_t operand_base = 0;
  std::uint32_t operand_cols = 1;
};

// Dual-window accept: 2D bounds check in linear mode, wrapped interval in
// modular mode.
inline bool window_accept(const FilterState& f, std::uint32_t addr_tag) {
  if (f.win.modulus > 0) {
    std::uint32_t n = f.win.modulus;
    std::uint32_t rel = (addr_tag % n + n - f.win.batch_start % n) % n;
    return rel < f.win.col_hi - f.win.col_lo + 1;
  }
  if (addr_tag < f.operand_base) return false;
  std::uint32_t rel = addr_tag - f.operand_base;
  std::uint32_t row = rel / f.operand_cols;
  std::uint32_t col = rel % f.operand_cols;
  return row >= f.win.row_lo && row <= f.win.row_hi && col >= f.win.col_lo && col <= f.win.col_hi;
}

struct StallBreakdown {
  std::size_t l2_transfer = 0;
  std::size_t shift_propagation = 0;
  std::size_t divider_wait = 0;
  std::size_t ddr_wait = 0;
  std::size_t total() const { return l2_transfer + shift_propagation + divider_wait + ddr_wait; }
};

struct BundleCycles {
  std::string opcode;
  std::size_t streaming = 0;
  std::size_t compute = 0;
  std::size_t drain = 0;
  std::size_t setup = 0;
  StallBreakdown stalls;
  std::size_t total = 0;
};

struct TraceEvent {
  std::size_t cycle;
  std::string unit;
  std::string event;
};

struct SimReport {
  std::size_t total_cycles = 0;
  std::size_t pe_active_cycles = 0;
  double utilization = 0.0;
  StallBreakdown stall_cycles;
  std::size_t sram_elements_read = 0;
  std::size_t ddr_elements_read = 0;
  std::size_t broadcast_cycles = 0;
  double sram_per_thread_bytes = 0.0;
  std::vector<BundleCycles> bundles;
  std::vector<TraceEvent> trace;
};

namespace detail {

using refexec::kernels::dequantize;
using refexec::kernels::quantize;
using refexec::kernels::requant_acc;

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return b ? (a + b - 1) / b : a; }

inline double scale_of(const SimConfig& cfg, const std::string& id) {
  auto it = cfg.quant.find(id);
  if (it == cfg.quant.end()) throw MissingCalibration("no QuantParams for tensor '" + id + "'");
  return it->second.scale;
}

inline double attr(const InstructionBundle& b, const std::string& key, double fallback) {
  auto it = b.attrs.find(key);
  return it == b.attrs.end() ? fallback : it->second;
}

// Guard against compiler bugs: every address a window can accept must fall
// inside the partitioned operand's extent.
inline void check_windows(const InstructionBundle& b, const OperandDesc& part,
                          std::size_t bundle_index) {
  for (const auto& w : b.windows) {
    if (w.modulus > 0) {
      if (w.modulus > part.elem_count())
        throw SimulationFault("bundle " + std::to_string(bundle_index) +
                              ": modular window exceeds operand extent");
    } else {
      if (w.row_hi >= part.rows() || w.col_hi >= part.cols())
        throw SimulationFault("bundle " + std::to_string(bundle_index) +
                              ": window accepts addresses outside operand extent");
    }
  }
}

inline std::size_t part_operand_index(Opcode op, std::size_t operand_count) {
  if (op == Opcode::CircularConv) return 1;
  (void)operand_count;
  return 0;
}

struct Env {
  std::map<std::string, TensorValue> tensors;
  const std::map<std::string, TensorValue>* external;
  const SimConfig* cfg;

  TensorValue& fetch(const OperandDesc& d) {
    auto it = tensors.find(d.id);
    if (it != tensors.end()) return it->second;
    auto ext = external->find(d.id);
    if (ext == external->end()) throw ShapeError("missing input tensor '" + d.id + "'");
    TensorValue t = ext->second;
    std::vector<std::size_t> shape(d.shape.begin(), d.shape.end());
    if (t.meta.shape != shape) throw ShapeError("shape mismatch on input '" + d.id + "'");
    t.meta.id = d.id;
    if (cfg->precision == Precision::Int8 && d.dtype == graph::DType::F32) {
      TensorValue q;
      q.meta = t.meta;
      q.meta.dtype = graph::DType::I8;
      double s = scale_of(*cfg, d.id);
      q.i8.reserve(t.f32.size());
      for (float v : t.f32) q.i8.push_back(quantize(v, s));
      return tensors.emplace(d.id, std::move(q)).first->second;
    }
    return tensors.emplace(d.id, std::move(t)).first->second;
  }

  TensorValue& output(const OperandDesc& d) {
    auto it = tensors.find(d.id);
    if (it != tensors.end()) return it->second;
    graph::TensorMeta m;
    m.id = d.id;
    m.shape.assign(d.shape.begin(), d.shape.end());
    m.strides.assign(d.strides.begin(), d.strides.end());
    m.dtype = d.dtype;
    m.base_addr = d.base_addr;
    if (cfg->precision == Precision::Int8 && m.dtype == graph::DType::F32) m.dtype = graph::DType::I8;
    return tensors.emplace(d.id, TensorValue::zeros(std::move(m))).first->second;
  }
};

// Functional semantics of one bundle. Mirrors the reference executor's
// arithmetic element for element; circular convolution is driven through the
// modular address windows the compiler emitted.
inline void execute_bundle(const InstructionBundle& b, Env& env, const SimConfig& cfg,
                           std::size_t bundle_index) {
  const bool int8 = cfg.precision == Precision::Int8;
  const OperandDesc& out_d = b.operands.back();
  std::vector<const TensorValue*> in;
  for (std::size_t i = 0; i + 1 < b.operands.size(); ++i) in.push_back(&env.fetch(b.operands[i]));
  TensorValue& out = env.output(out_d);
  check_windows(b, b.operands[part_operand_index(b.opcode, b.operands.size())], bundle_index);

  std::size_t row_base = static_cast<std::size_t>(attr(b, "row_base", 0));
  std::size_t rows_used = b.pe_config.rows_used;
  double sa = 1.0, sb = 1.0, so = 1.0;
  if (int8) {
    sa = scale_of(cfg, b.operands[0].id);
    if (b.operands.size() > 2) sb = scale_of(cfg, b.operands[1].id);
    if (out.meta.dtype == graph::DType::I8) so = scale_of(cfg, out_d.id);
  }

  switch (b.opcode) {
    case Opcode::MatMul: {
      std::size_t K = b.operands[0].shape[1], N = b.operands[1].shape[1];
      for (std::size_t r = 0; r < rows_used; ++r) {
        std::size_t i = row_base + r;
        for (std::size_t j = 0; j < N; ++j) {
          if (int8) {
            std::int32_t acc = 0;
            for (std::size_t k = 0; k < K; ++k)
              acc += static_cast<std::int32_t>(in[0]->i8[i * K + k]) * in[1]->i8[k * N + j];
            out.i8[i * N + j] = requant_acc(acc, sa, sb, so);
          } else {
            float acc = 0.0f;
            for (std::size_t k = 0; k < K; ++k)
              acc += in[0]->f32[i * K + k] * in[1]->f32[k * N + j];
            out.f32[i * N + j] = acc;
          }
        }
      }
      break;
    }
    case Opcode::Conv2D: {
      std::size_t stride = static_cast<std::size_t>(attr(b, "stride", 1));
      std::size_t W = b.operands[0].shape[1];
      std::size_t kh = b.operands[1].shape[0], kw = b.operands[1].shape[1];
      std::size_t Wo = out_d.shape[1];
      for (std::size_t r = 0; r < rows_used; ++r) {
        std::size_t oy = row_base + r;
        for (std::size_t ox = 0; ox < Wo; ++ox) {
          if (int8) {
            std::int32_t acc = 0;
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx)
                acc += static_cast<std::int32_t>(in[0]->i8[(oy * stride + ky) * W + ox * stride + kx]) *
                       in[1]->i8[ky * kw + kx];
            out.i8[oy * Wo + ox] = requant_acc(acc, sa, sb, so);
          } else {
            float acc = 0.0f;
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx)
                acc += in[0]->f32[(oy * stride + ky) * W + ox * stride + kx] * in[1]->f32[ky * kw + kx];
            out.f32[oy * Wo + ox] = acc;
          }
        }
      }
      break;
    }
    case Opcode::ElemAdd:
    case Opcode::ElemMul: {
      std::size_t cols = out_d.cols();
      for (std::size_t r = 0; r < rows_used; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
          std::size_t i = (row_base + r) * cols + c;
          if (int8) {
            if (b.opcode == Opcode::ElemAdd) {
              out.i8[i] = quantize(dequantize(in[0]->i8[i], sa) + dequantize(in[1]->i8[i], sb), so);
            } else {
              std::int32_t acc = static_cast<std::int32_t>(in[0]->i8[i]) * in[1]->i8[i];
              out.i8[i] = requant_acc(acc, sa, sb, so);
            }
          } else {
            out.f32[i] = b.opcode == Opcode::ElemAdd ? in[0]->f32[i] + in[1]->f32[i]
                                                     : in[0]->f32[i] * in[1]->f32[i];
          }
        }
      break;
    }
    case Opcode::PadeActivate: {
      pade::PadeApproximant approx = compiler::approx_from_bundle(b);
      std::size_t cols = out_d.cols();
      for (std::size_t r = 0; r < rows_used; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
          std::size_t i = (row_base + r) * cols + c;
          if (int8) {
            double y = pade::eval(approx, dequantize(in[0]->i8[i], sa));
            out.i8[i] = quantize(y, so);
          } else {
            out.f32[i] = static_cast<float>(pade::eval(approx, static_cast<double>(in[0]->f32[i])));
          }
        }
      break;
    }
    case Opcode::CircularConv: {
      // Broadcast B's extent; each enabled row pairs the streamed value with
      // the coefficient selected by its modular window offset.
      const OperandDesc& bd = b.operands[1];
      for (std::size_t r = 0; r < rows_used; ++r) {
        const AddressWindowConfig& w = b.windows[r];
        FilterState f{w, bd.base_addr, static_cast<std::uint32_t>(bd.cols())};
        std::size_t N = w.modulus;
        std::size_t i = row_base + r;
        std::int32_t iacc = 0;
        float facc = 0.0f;
        for (std::size_t jj = 0; jj < N; ++jj) {
          std::uint32_t addr = bd.base_addr + static_cast<std::uint32_t>(jj);
          if (!window_accept(f, addr))
            throw SimulationFault("circular window rejected in-range address");
          // coefficient index j with jj = (i - j) mod N
          std::size_t j = (w.batch_start + N - addr % N) % N;
          if (int8) iacc += static_cast<std::int32_t>(in[0]->i8[j]) * in[1]->i8[jj];
          else facc += in[0]->f32[j] * in[1]->f32[jj];
        }
        if (int8) out.i8[i] = requant_acc(iacc, sa, sb, so);
        else out.f32[i] = facc;
      }
      break;
    }
    case Opcode::SimilaritySearch: {
      std::size_t D = b.operands[0].shape[1], Kk = b.operands[1].shape[0];
      bool cosine = attr(b, "cosine", 0) != 0;
      for (std::size_t r = 0; r < rows_used; ++r) {
        std::size_t qi = row_base + r;
        std::size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t row = 0; row < Kk; ++row) {
          double score;
          if (int8) {
            std::int32_t acc = 0;
            for (std::size_t d = 0; d < D; ++d)
              acc += static_cast<std::int32_t>(in[0]->i8[qi * D + d]) * in[1]->i8[row * D + d];
            score = static_cast<double>(acc);
          } else {
            double acc = 0.0;
            for (std::size_t d = 0; d < D; ++d)
              acc += static_cast<double>(in[0]->f32[qi * D + d]) * in[1]->f32[row * D + d];
            score = acc;
          }
          if (cosine) {
            double nq = 0.0, nr = 0.0;
            for (std::size_t d = 0; d < D; ++d) {
              double qv = int8 ? static_cast<double>(in[0]->i8[qi * D + d]) : in[0]->f32[qi * D + d];
              double rv = int8 ? static_cast<double>(in[1]->i8[row * D + d]) : in[1]->f32[row * D + d];
              nq += qv * qv;
              nr += rv * rv;
            }
            double denom = std::sqrt(nq) * std::sqrt(nr);
            score = denom > 0 ? score / denom : 0.0;
          }
          if (score > best_score) {
            best_score = score;
            best = row;
          }
        }
        out.i32[qi] = static_cast<std::int32_t>(best);
      }
      break;
    }
    case Opcode::FuzzyAnd:
    case Opcode::FuzzyOr:
    case Opcode::FuzzyNot: {
      std::size_t cols = out_d.cols();
      for (std::size_t r = 0; r < rows_used; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
          std::size_t i = (row_base + r) * cols + c;
          double x = int8 ? dequantize(in[0]->i8[i], sa) : in[0]->f32[i];
          double y = 0.0;
          if (b.opcode != Opcode::FuzzyNot) y = int8 ? dequantize(in[1]->i8[i], sb) : in[1]->f32[i];
          double v = b.opcode == Opcode::FuzzyAnd ? refexec::kernels::fuzzy_and(x, y)
                     : b.opcode == Opcode::FuzzyOr ? refexec::kernels::fuzzy_or(x, y)
                                                   : refexec::kernels::fuzzy_not(x);
          if (int8) out.i8[i] = quantize(v, so);
          else out.f32[i] = static_cast<float>(v);
        }
      break;
    }
  }
}

// Scalar-op work one PE row performs in this bundle.
inline std::size_t row_work(const InstructionBundle& b) {
  switch (b.opcode) {
    case Opcode::MatMul:
      return static_cast<std::size_t>(b.operands[0].shape[1]) * b.operands[1].shape[1];
    case Opcode::Conv2D: {
      std::size_t kh = b.operands[1].shape[0], kw = b.operands[1].shape[1];
      return b.operands.back().shape[1] * kh * kw;
    }
    case Opcode::CircularConv:
      return b.windows.empty() ? 0 : b.windows.front().modulus;
    case Opcode::SimilaritySearch:
      return static_cast<std::size_t>(b.operands[0].shape[1]) * b.operands[1].shape[0];
    default:
      return b.operands.back().cols();
  }
}

struct StreamCost {
  std::size_t cycles = 0;
  std::size_t ddr_wait = 0;
  std::size_t sram_elems = 0;
  std::size_t ddr_elems = 0;
};

inline StreamCost stream_cost(const InstructionBundle& b, const SimConfig& cfg) {
  StreamCost s;
  for (std::size_t i = 0; i + 1 < b.operands.size(); ++i) {
    const auto& op = b.operands[i];
    std::size_t e = op.elem_count();
    if (op.placement == Placement::Ddr) {
      std::size_t width = std::min(cfg.hw.broadcast_width, cfg.hw.ddr_bandwidth);
      std::size_t c = ceil_div(e, width);
      s.cycles += c + cfg.hw.ddr_latency;
      s.ddr_wait += cfg.hw.ddr_latency + (c - ceil_div(e, cfg.hw.broadcast_width));
      s.ddr_elems += e;
    } else {
      s.cycles += ceil_div(e, cfg.hw.broadcast_width);
      s.sram_elems += e;
    }
  }
  return s;
}

}  // namespace detail

inline std::pair<std::map<std::string, TensorValue>, SimReport> run(
    const Program& p, const std::map<std::string, TensorValue>& inputs, const SimConfig& cfg) {
  if (p.header.rows != cfg.hw.rows || p.header.cols != cfg.hw.cols)
    throw ConfigError("program header " + std::to_string(p.header.rows) + "x" +
                      std::to_string(p.header.cols) + " does not match configured array");
  if (p.header.sram_bytes != cfg.hw.sram_bytes)
    throw ConfigError("program SRAM size does not match configuration");

  detail::Env env{{}, &inputs, &cfg};
  SimReport rep;
  std::size_t prev_total = 0;
  for (std::size_t bi = 0; bi < p.bundles.size(); ++bi) {
    const InstructionBundle& b = p.bundles[bi];
    detail::execute_bundle(b, env, cfg, bi);

    BundleCycles bc;
    bc.opcode = isa::opcode_name(b.opcode);
    detail::StreamCost sc = detail::stream_cost(b, cfg);
    bc.streaming = sc.cycles;
    bc.stalls.ddr_wait = sc.ddr_wait;
    rep.sram_elements_read += sc.sram_elems;
    rep.ddr_elements_read += sc.ddr_elems;

    std::size_t rows_used = b.pe_config.rows_used;
    std::size_t active_ops = 0;
    if (b.opcode == Opcode::PadeActivate) {
      std::size_t k = b.pe_config.pade_order;
      std::size_t threads = b.pe_config.threads_per_row;
      std::size_t elems = rows_used * b.operands.back().cols();
      // MAC ladder: a thread accepts a new element every 2 cycles; the row
      // divider retires 1 element per cycle.
      std::size_t c_mac = detail::ceil_div(2 * elems, std::max<std::size_t>(1, rows_used * threads));
      std::size_t c_div = detail::ceil_div(elems, std::max<std::size_t>(1, rows_used));
      bc.compute = std::max(c_mac, c_div);
      if (c_div > std::max(sc.cycles, c_mac)) bc.stalls.divider_wait = c_div - std::max(sc.cycles, c_mac);
      bc.drain = 2 * k + cfg.divider_pipeline_depth;
      active_ops = elems * (2 * k + 1);
    } else {
      std::size_t lanes = std::max<std::size_t>(1, b.pe_config.cols_used);
      bc.compute = detail::ceil_div(detail::row_work(b), lanes);
      bc.drain = cfg.mac_latency;
      active_ops = rows_used * detail::row_work(b);
    }
    rep.pe_active_cycles += active_ops;

    std::size_t load = b.windows.size();
    if (cfg.mode == Mode::TwoLevelBaseline) {
      std::size_t ws = 0;
      for (const auto& op : b.operands) ws += op.elem_count();
      bc.stalls.l2_transfer = detail::ceil_div(ws, std::max<std::size_t>(1, cfg.l2_transfer_width));
      bc.setup = load;
    } else {
      // Pre-decode loads the next bundle's filters during the current bundle.
      bc.setup = bi == 0 ? load : (load > prev_total ? load - prev_total : 0);
    }
    if (cfg.circ_impl == CircImpl::ShiftRegisterBaseline && b.opcode == Opcode::CircularConv) {
      std::size_t n = b.windows.empty() ? 0 : b.windows.front().modulus;
      bc.stalls.shift_propagation = rows_used * n;  // serialized rotation, width 1
    }

    bc.total = std::max(bc.streaming, bc.compute) + bc.drain + bc.setup + bc.stalls.l2_transfer +
               bc.stalls.shift_propagation + bc.stalls.divider_wait + bc.stalls.ddr_wait;
    if (cfg.trace) {
      rep.trace.push_back({rep.total_cycles, "controller", std::string("bundle ") + bc.opcode + " start"});
      if (bc.stalls.total() > 0)
        rep.trace.push_back({rep.total_cycles + std::max(bc.streaming, bc.compute), "array",
                             "stall " + std::to_string(bc.stalls.total())});
    }
    rep.total_cycles += bc.total;
    if (cfg.trace)
      rep.trace.push_back({rep.total_cycles, "controller", std::string("bundle ") + bc.opcode + " end"});
    rep.broadcast_cycles += bc.streaming;
    rep.stall_cycles.l2_transfer += bc.stalls.l2_transfer;
    rep.stall_cycles.shift_propagation += bc.stalls.shift_propagation;
    rep.stall_cycles.divider_wait += bc.stalls.divider_wait;
    rep.stall_cycles.ddr_wait += bc.stalls.ddr_wait;
    prev_total = bc.total;
    rep.bundles.push_back(std::move(bc));
  }

  std::size_t pe_count = cfg.hw.rows * cfg.hw.cols;
  rep.utilization = rep.total_cycles
                        ? static_cast<double>(rep.pe_active_cycles) /
                              (static_cast<double>(rep.total_cycles) * static_cast<double>(pe_count))
                        : 0.0;
  // Per-thread staging: bypass rows hold only their filter registers; the
  // two-level baseline additionally stages one L1 block per doubling of the
  // array to keep a fixed-bandwidth bus fed.
  constexpr double kFilterRegBytes = 28.0;  // 7 x u32
  rep.sram_per_thread_bytes = kFilterRegBytes;
  if (cfg.mode == Mode::TwoLevelBaseline)
    rep.sram_per_thread_bytes +=
        static_cast<double>(cfg.l2_block_elems * 4) * std::log2(static_cast<double>(std::max<std::size_t>(pe_count, 1)));

  // Every tensor the program wrote (inputs excluded); callers select the
  // graph-level outputs they care about.
  std::map<std::string, TensorValue> outputs;
  for (auto& [id, t] : env.tensors)
    if (!inputs.count(id)) outputs[id] = t;
  return {std::move(outputs), std::move(rep)};
}

struct ScalingPoint {
  std::size_t pe_count = 0;
  std::size_t rows = 0;
  double bypass_sram_per_thread = 0.0;
  double baseline_sram_per_thread = 0.0;
  double bypass_active_fraction = 0.0;
  double baseline_active_fraction = 0.0;
};

// Sweep PE count at fixed broadcast width and workload; compares bypass and
// two-level staging per configuration.
inline std::vector<ScalingPoint> report_scaling(const graph::Graph& g,
                                                const std::map<std::string, TensorValue>& inputs,
                                                const SimConfig& tmpl,
                                                const std::vector<std::size_t>& pe_counts,
                                                const compiler::CompileOptions& opts = {}) {
  std::vector<ScalingPoint> table;
  for (std::size_t pe : pe_counts) {
    SimConfig cfg = tmpl;
    cfg.hw.rows = std::max<std::size_t>(1, pe / cfg.hw.cols);
    Program p = compiler::lower(g, cfg.hw, opts);
    ScalingPoint pt;
    pt.pe_count = pe;
    pt.rows = cfg.hw.rows;
    cfg.mode = Mode::Bypass;
    auto [o1, r1] = run(p, inputs, cfg);
    pt.bypass_sram_per_thread = r1.sram_per_thread_bytes;
    pt.bypass_active_fraction = r1.utilization;
    cfg.mode = Mode::TwoLevelBaseline;
    auto [o2, r2] = run(p, inputs, cfg);
    pt.baseline_sram_per_thread = r2.sram_per_thread_bytes;
    pt.baseline_active_fraction = r2.utilization;
    table.push_back(pt);
  }
  return table;
}

}  // namespace overmind::machine

#endif
