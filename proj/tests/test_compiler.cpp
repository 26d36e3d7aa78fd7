#include <doctest.h>

#include "helpers.hpp"
#include "overmind/compiler.hpp"

using namespace overmind;
using compiler::CompileOptions;
using compiler::HwConfig;

TEST_CASE("placement: reused tensors go on-chip, streams go to backing store") {
  auto g = graph::parse_graph(testutil::read_file(testutil::corpus_path("act_only.json")));
  HwConfig hw;
  auto pl = compiler::place_memory(g, hw);
  CHECK(pl.at("x") == isa::Placement::Sram);  // consumed by both activations
  CHECK(pl.at("y1") == isa::Placement::Ddr);
  CHECK(pl.at("y2") == isa::Placement::Ddr);
}

TEST_CASE("placement: capacity limits spill the largest-reuse-last candidates") {
  auto g = graph::parse_graph(testutil::read_file(testutil::corpus_path("act_only.json")));
  HwConfig hw;
  hw.sram_bytes = 64;  // x is 16 KiB; cannot fit
  auto pl = compiler::place_memory(g, hw);
  CHECK(pl.at("x") == isa::Placement::Ddr);
}

TEST_CASE("placement: tensors larger than both memories are an error") {
  auto g = graph::parse_graph(testutil::read_file(testutil::corpus_path("elemadd.json")));
  HwConfig hw;
  hw.sram_bytes = 16;
  hw.ddr_bytes = 16;
  CHECK_THROWS_AS(compiler::place_memory(g, hw), PlacementError);
}

TEST_CASE("circular windows rotate the batch start per output row") {
  auto g = graph::parse_graph(testutil::read_file(testutil::corpus_path("circconv.json")));
  HwConfig hw;
  auto node = g.nodes[0];
  auto plan = compiler::compute_windows(node, g.tensors, hw, 0, hw.rows);
  REQUIRE(plan.rows_used == 32);  // N=64 tiled over R=32
  std::size_t base = g.tensors.at("b").base_addr;
  for (std::size_t i = 0; i < plan.windows.size(); ++i) {
    const auto& w = plan.windows[i];
    CHECK(w.modulus == 64);
    CHECK(w.batch_start == (base + i) % 64);
    CHECK(w.circ_offset == i % 64);
    CHECK(w.col_hi - w.col_lo + 1 == 64);
  }
  auto tail = compiler::compute_windows(node, g.tensors, hw, 32, hw.rows);
  CHECK(tail.rows_used == 32);
  CHECK(tail.windows[0].batch_start == (base + 32) % 64);
}

TEST_CASE("conv windows cover exactly the receptive field rows") {
  auto g = graph::parse_graph(testutil::read_file(testutil::corpus_path("mixed.json")));
  const graph::OpNode* conv = nullptr;
  for (const auto& n : g.nodes)
    if (n.kind == graph::OpKind::Conv2D) conv = &n;
  REQUIRE(conv != nullptr);
  HwConfig hw;
  auto plan = compiler::compute_windows(*conv, g.tensors, hw);
  REQUIRE(plan.rows_used == 4);  // 4x4 output
  CHECK(plan.windows[0].row_lo == 0);
  CHECK(plan.windows[0].row_hi == 2);  // 3-row kernel
  CHECK(plan.windows[3].row_lo == 3);
  CHECK(plan.windows[3].row_hi == 5);
  CHECK(plan.windows[0].col_hi == 5);  // (Wo-1)*stride + kw - 1
}

TEST_CASE("activation planning packs 2k columns per thread") {
  auto g = graph::parse_graph(testutil::read_file(testutil::corpus_path("act_only.json")));
  HwConfig hw;  // C = 16
  CompileOptions opts;
  opts.forced_k = 3;
  auto plan = compiler::plan_pade(g.nodes[0], opts, hw);
  CHECK(plan.pe.pade_order == 3);
  CHECK(plan.pe.cols_used == 6);
  CHECK(plan.pe.threads_per_row == 2);
  CHECK(plan.pe.divider_enabled);
  opts.forced_k = 6;
  plan = compiler::plan_pade(g.nodes[0], opts, hw);
  CHECK(plan.pe.cols_used == 12);
  CHECK(plan.pe.threads_per_row == 1);
  opts.forced_k = 100;  // capped at C/2
  plan = compiler::plan_pade(g.nodes[0], opts, hw);
  CHECK(plan.pe.pade_order == 8);
}

TEST_CASE("lowering the single-node graph yields one bundle") {
  auto g = graph::parse_graph(testutil::read_file(testutil::corpus_path("elemadd.json")));
  auto p = compiler::lower(g, HwConfig{});
  REQUIRE(p.bundles.size() == 1);
  CHECK(p.bundles[0].opcode == isa::Opcode::ElemAdd);
  CHECK(p.bundles[0].pe_config.rows_used == 4);
  CHECK(p.bundles[0].operands.size() == 3);
  CHECK(p.bundles[0].operands.back().id == "z");
  CHECK(p.header.rows == 32);
  // deterministic output
  CHECK(isa::encode(p) == isa::encode(compiler::lower(g, HwConfig{})));
}

TEST_CASE("tall operators tile into row-base bundles") {
  const char* doc = R"({"tensors":[{"id":"a","shape":[70,4]},{"id":"b","shape":[70,4]},
    {"id":"c","shape":[70,4]}],
    "nodes":[{"id":"n","kind":"ElemAdd","inputs":["a","b"],"output":"c"}],
    "inputs":["a","b"],"outputs":["c"]})";
  auto g = graph::parse_graph(doc);
  auto p = compiler::lower(g, HwConfig{});
  REQUIRE(p.bundles.size() == 3);  // ceil(70 / 32)
  CHECK(p.bundles[0].attrs.count("row_base") == 0);
  CHECK(p.bundles[1].attrs.at("row_base") == 32.0);
  CHECK(p.bundles[2].attrs.at("row_base") == 64.0);
  CHECK(p.bundles[0].pe_config.rows_used == 32);
  CHECK(p.bundles[2].pe_config.rows_used == 6);
}

TEST_CASE("lowered programs re-encode losslessly") {
  for (const char* f : {"alternating6.json", "mixed.json", "nvsa_like.json", "circconv.json"}) {
    auto g = graph::parse_graph(testutil::read_file(testutil::corpus_path(f)));
    CompileOptions opts;
    opts.target_mae = 0.05;
    auto p = compiler::lower(g, HwConfig{}, opts);
    CHECK(isa::decode(isa::encode(p)) == p);
  }
}

TEST_CASE("unreachable accuracy targets name the offending node") {
  auto g = graph::parse_graph(testutil::read_file(testutil::corpus_path("act_only.json")));
  CompileOptions opts;
  opts.target_mae = 1e-12;
  opts.max_pade_k = 2;
  try {
    compiler::lower(g, HwConfig{}, opts);
    FAIL("expected TargetUnreachable");
  } catch (const TargetUnreachable& e) {
    CHECK(std::string(e.what()).find("act0") != std::string::npos);
  }
}

TEST_CASE("bundle coefficients round-trip through the f32 payload") {
  auto g = graph::parse_graph(testutil::read_file(testutil::corpus_path("act_only.json")));
  CompileOptions opts;
  opts.forced_k = 3;
  auto p = compiler::lower(g, HwConfig{}, opts);
  const isa::InstructionBundle* act = nullptr;
  for (const auto& b : p.bundles)
    if (b.opcode == isa::Opcode::PadeActivate) act = &b;
  REQUIRE(act != nullptr);
  auto approx = compiler::approx_from_bundle(*act);
  CHECK(approx.m == 3);
  CHECK(approx.n == 3);
  for (std::size_t i = 0; i < approx.a.size(); ++i)
    CHECK(approx.a[i] == static_cast<double>(act->pade_a[i]));
}
