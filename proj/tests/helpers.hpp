#ifndef TESTS_HELPERS_HPP
#define TESTS_HELPERS_HPP

#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "overmind/graph.hpp"
#include "overmind/isa.hpp"
#include "overmind/refexec.hpp"

namespace testutil {

inline std::string corpus_path(const std::string& name) {
  return std::string(CORPUS_DIR) + "/" + name;
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

inline overmind::refexec::TensorValue random_f32(const overmind::graph::TensorMeta& m,
                                                 std::mt19937& rng, double lo = -1.0,
                                                 double hi = 1.0) {
  overmind::refexec::TensorValue t = overmind::refexec::TensorValue::zeros(m);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.f32) v = static_cast<float>(dist(rng));
  return t;
}

inline std::map<std::string, overmind::refexec::TensorValue> random_graph_inputs(
    const overmind::graph::Graph& g, unsigned seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937 rng(seed);
  std::map<std::string, overmind::refexec::TensorValue> inputs;
  for (const auto& id : g.inputs) inputs[id] = random_f32(g.tensors.at(id), rng, lo, hi);
  return inputs;
}

// Structurally valid random program for round-trip and fuzz testing.
inline overmind::isa::Program random_program(std::mt19937& rng) {
  using namespace overmind::isa;
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  Program p;
  p.header.rows = static_cast<std::uint16_t>(8 * (1 + pick(4)));
  p.header.cols = static_cast<std::uint16_t>(8 + 8 * pick(2));
  p.header.sram_bytes = 1u << (12 + pick(4));
  std::size_t nb = 1 + pick(4);
  for (std::size_t bi = 0; bi < nb; ++bi) {
    InstructionBundle b;
    b.opcode = static_cast<Opcode>(pick(10));
    std::size_t nops = 1 + pick(3);
    for (std::size_t oi = 0; oi < nops; ++oi) {
      OperandDesc d;
      d.id = "t" + std::to_string(pick(8)) + "_" + std::to_string(oi);
      d.dtype = static_cast<overmind::graph::DType>(pick(3));
      d.placement = static_cast<Placement>(pick(2));
      d.base_addr = static_cast<std::uint32_t>(pick(1024));
      std::size_t ndim = 1 + pick(3);
      for (std::size_t k = 0; k < ndim; ++k) d.shape.push_back(1 + static_cast<std::uint32_t>(pick(8)));
      std::uint32_t stride = 1;
      d.strides.assign(ndim, 1);
      for (std::size_t k = ndim; k-- > 1;) {
        d.strides[k - 1] = stride * d.shape[k];
        stride = d.strides[k - 1];
      }
      b.operands.push_back(std::move(d));
    }
    std::size_t rows_used = 1 + pick(p.header.rows);
    b.row_enable_mask.assign((p.header.rows + 7) / 8, 0);
    for (std::size_t r = 0; r < rows_used; ++r)
      b.row_enable_mask[r / 8] = static_cast<std::uint8_t>(b.row_enable_mask[r / 8] | (1u << (r % 8)));
    for (std::size_t r = 0; r < rows_used; ++r) {
      AddressWindowConfig w;
      if (pick(3) == 0) {
        w.modulus = 1 + static_cast<std::uint32_t>(pick(64));
        std::uint32_t span = 1 + static_cast<std::uint32_t>(pick(w.modulus));
        w.col_lo = 0;
        w.col_hi = span - 1;
        w.circ_offset = static_cast<std::uint32_t>(pick(w.modulus));
        w.batch_start = static_cast<std::uint32_t>(pick(256));
        w.row_lo = w.row_hi = static_cast<std::uint32_t>(r);
      } else {
        w.row_lo = static_cast<std::uint32_t>(pick(16));
        w.row_hi = w.row_lo + static_cast<std::uint32_t>(pick(8));
        w.col_lo = static_cast<std::uint32_t>(pick(16));
        w.col_hi = w.col_lo + static_cast<std::uint32_t>(pick(8));
        w.batch_start = static_cast<std::uint32_t>(pick(1024));
      }
      b.windows.push_back(w);
    }
    b.pe_config.rows_used = static_cast<std::uint16_t>(rows_used);
    if (b.opcode == Opcode::PadeActivate) {
      std::size_t k = 1 + pick(p.header.cols / 2 < 4 ? p.header.cols / 2 : 4);
      b.pe_config.pade_order = static_cast<std::uint16_t>(k);
      b.pe_config.cols_used = static_cast<std::uint16_t>(2 * k);
      b.pe_config.threads_per_row = static_cast<std::uint16_t>(1 + pick(4));
      b.pe_config.divider_enabled = true;
      for (std::size_t i = 0; i <= k; ++i)
        b.pade_a.push_back(static_cast<float>(static_cast<int>(pick(2000)) - 1000) / 64.0f);
      for (std::size_t i = 0; i < k; ++i)
        b.pade_b.push_back(static_cast<float>(static_cast<int>(pick(2000)) - 1000) / 64.0f);
    } else {
      b.pe_config.cols_used = static_cast<std::uint16_t>(1 + pick(p.header.cols));
      b.pe_config.threads_per_row = 1;
      b.pe_config.pade_order = 0;
      b.pe_config.divider_enabled = false;
    }
    std::size_t nattrs = pick(3);
    for (std::size_t ai = 0; ai < nattrs; ++ai)
      b.attrs["k" + std::to_string(ai)] = static_cast<double>(pick(1000)) / 7.0;
    p.bundles.push_back(std::move(b));
  }
  return p;
}

}  // namespace testutil

#endif
