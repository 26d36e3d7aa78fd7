// omc: Overmind model compiler / simulator driver.
//
// Subcommands: fit, compile, run, sweep, profile, compare, disasm.
// Exit codes: 0 success, 1 domain error, 2 usage error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "overmind/compiler.hpp"
#include "overmind/graph.hpp"
#include "overmind/isa.hpp"
#include "overmind/machine.hpp"
#include "overmind/pade.hpp"
#include "overmind/refexec.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace overmind;

namespace {

pade::Interval parse_range(const std::string& s) {
  auto colon = s.find(':', 1);  // skip a leading '-'
  if (colon == std::string::npos) throw CLI::ValidationError("--range", "expected lo:hi");
  try {
    return {std::stod(s.substr(0, colon)), std::stod(s.substr(colon + 1))};
  } catch (const std::exception&) {
    throw CLI::ValidationError("--range", "expected lo:hi");
  }
}

void apply_hw_flag(compiler::HwConfig& hw, const std::string& s) {
  if (s.empty()) return;
  unsigned r = 0, c = 0, sram = 0;
  if (std::sscanf(s.c_str(), "%u,%u,%u", &r, &c, &sram) != 3 || r == 0 || c == 0)
    throw CLI::ValidationError("--hw", "expected R,C,sram_bytes");
  hw.rows = r;
  hw.cols = c;
  hw.sram_bytes = sram;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

json pade_to_json(const pade::PadeApproximant& p, double mae) {
  return json{{"function_id", p.function_id}, {"m", p.m},
              {"n", p.n},                     {"a", p.a},
              {"b", p.b},                     {"range", {p.range.lo, p.range.hi}},
              {"mae", mae}};
}

json stalls_to_json(const machine::StallBreakdown& s) {
  return json{{"l2_transfer", s.l2_transfer},
              {"shift_propagation", s.shift_propagation},
              {"divider_wait", s.divider_wait},
              {"ddr_wait", s.ddr_wait}};
}

json report_to_json(const machine::SimReport& r, bool timestamp) {
  json j{{"total_cycles", r.total_cycles},
         {"pe_active_cycles", r.pe_active_cycles},
         {"utilization", r.utilization},
         {"stall_cycles", stalls_to_json(r.stall_cycles)},
         {"sram_elements_read", r.sram_elements_read},
         {"ddr_elements_read", r.ddr_elements_read},
         {"broadcast_cycles", r.broadcast_cycles},
         {"sram_per_thread_bytes", r.sram_per_thread_bytes}};
  json bundles = json::array();
  for (const auto& b : r.bundles)
    bundles.push_back(json{{"opcode", b.opcode},
                           {"streaming", b.streaming},
                           {"compute", b.compute},
                           {"drain", b.drain},
                           {"setup", b.setup},
                           {"stalls", stalls_to_json(b.stalls)},
                           {"total", b.total}});
  j["bundles"] = std::move(bundles);
  if (timestamp)
    j["timestamp"] = std::chrono::duration_cast<std::chrono::seconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  os << text;
}

// Tensor ids a program consumes but never produces.
std::vector<isa::OperandDesc> program_inputs(const isa::Program& p) {
  std::set<std::string> produced, seen;
  std::vector<isa::OperandDesc> result;
  for (const auto& b : p.bundles) {
    for (std::size_t i = 0; i + 1 < b.operands.size(); ++i) {
      const auto& op = b.operands[i];
      if (!produced.count(op.id) && !seen.count(op.id)) {
        seen.insert(op.id);
        result.push_back(op);
      }
    }
    produced.insert(b.operands.back().id);
  }
  return result;
}

refexec::TensorValue random_tensor(const graph::TensorMeta& meta, std::mt19937& rng) {
  refexec::TensorValue t = refexec::TensorValue::zeros(meta);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (auto& v : t.f32) v = static_cast<float>(dist(rng));
  for (auto& v : t.i8) v = static_cast<std::int8_t>(std::uniform_int_distribution<int>(-100, 100)(rng));
  for (auto& v : t.i32) v = std::uniform_int_distribution<int>(-100, 100)(rng);
  return t;
}

std::map<std::string, refexec::TensorValue> gather_inputs(const isa::Program& p,
                                                          const std::string& dir,
                                                          unsigned seed) {
  std::map<std::string, refexec::TensorValue> inputs;
  std::mt19937 rng(seed);
  for (const auto& op : program_inputs(p)) {
    graph::TensorMeta m;
    m.id = op.id;
    m.shape.assign(op.shape.begin(), op.shape.end());
    m.strides = graph::row_major_strides(m.shape);
    m.dtype = op.dtype;
    m.base_addr = op.base_addr;
    fs::path f = fs::path(dir) / (op.id + ".omt");
    if (!dir.empty() && fs::exists(f)) {
      inputs[op.id] = refexec::load_tensor(f.string());
      inputs[op.id].meta.id = op.id;
    } else {
      inputs[op.id] = random_tensor(m, rng);
    }
  }
  return inputs;
}

refexec::QuantMap calibrate_via_f32(const isa::Program& p,
                                    const std::map<std::string, refexec::TensorValue>& inputs,
                                    machine::SimConfig cfg) {
  cfg.precision = refexec::Precision::F32;
  auto [produced, rep] = machine::run(p, inputs, cfg);
  refexec::QuantMap q;
  for (const auto& [id, t] : inputs)
    q[id] = t.meta.dtype == graph::DType::F32 ? refexec::calibrate(t) : refexec::QuantParams{1.0};
  for (const auto& [id, t] : produced)
    q[id] = t.meta.dtype == graph::DType::F32 ? refexec::calibrate(t) : refexec::QuantParams{1.0};
  return q;
}

struct CommonSimFlags {
  std::string mode = "bypass";
  std::string circ = "offset";
  unsigned seed = 1;
  std::size_t broadcast_width = 16;
  bool no_timestamp = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--mode", mode)->check(CLI::IsMember({"bypass", "baseline"}));
    cmd->add_option("--circ", circ)->check(CLI::IsMember({"offset", "shift"}));
    cmd->add_option("--seed", seed);
    cmd->add_option("--broadcast-width", broadcast_width);
    cmd->add_flag("--no-timestamp", no_timestamp);
  }
  void apply(machine::SimConfig& cfg) const {
    cfg.mode = mode == "baseline" ? machine::Mode::TwoLevelBaseline : machine::Mode::Bypass;
    cfg.circ_impl = circ == "shift" ? machine::CircImpl::ShiftRegisterBaseline
                                    : machine::CircImpl::AddressOffset;
    cfg.hw.broadcast_width = broadcast_width;
  }
};

int run_main(int argc, char** argv) {
  CLI::App app{"Overmind compiler and cycle-level simulator"};
  app.require_subcommand(1);

  // ---- fit ----
  auto* fit = app.add_subcommand("fit", "fit Padé coefficients for a nonlinear function");
  std::string fit_fn, fit_range, fit_method = "lstsq", fit_out;
  std::size_t fit_k = 3;
  fit->add_option("--fn", fit_fn, "function id")->required();
  fit->add_option("--k", fit_k, "balanced order (m=n=k)");
  fit->add_option("--range", fit_range, "lo:hi (default: function's range)");
  fit->add_option("--method", fit_method)->check(CLI::IsMember({"taylor", "lstsq"}));
  fit->add_option("-o,--out", fit_out, "coefficient JSON path");
  fit->callback([&] {
    pade::FunctionSpec spec;
    try {
      spec = pade::builtin_spec(fit_fn);
    } catch (const UnknownOperator& e) {
      throw CLI::ValidationError("--fn", e.what());
    }
    pade::Interval range = fit_range.empty() ? spec.default_range : parse_range(fit_range);
    pade::PadeApproximant p;
    if (fit_method == "taylor") {
      if (!spec.taylor) throw DegenerateFit("no series expansion for " + fit_fn);
      p = pade::fit_taylor_pade(spec.taylor(0.0, 2 * fit_k + 1), fit_k, fit_k, range);
      p.function_id = spec.function_id;
    } else {
      p = pade::fit_least_squares(spec, fit_k, fit_k, range);
    }
    double mae = pade::max_abs_error(p, spec, range, 1001);
    json j = pade_to_json(p, mae);
    if (!fit_out.empty()) write_text(fit_out, j.dump(2) + "\n");
    else std::cout << j.dump(2) << "\n";
    std::cout << "MAE " << mae << "\n";
  });

  // ---- compile ----
  auto* compile = app.add_subcommand("compile", "lower a graph document to an .omp program");
  std::string gc_in, gc_out, gc_hw, gc_method = "lstsq";
  double gc_target = 1e-3;
  std::size_t gc_maxk = 8, gc_forcedk = 0;
  bool gc_disasm = false;
  compile->add_option("graph", gc_in)->required()->check(CLI::ExistingFile);
  compile->add_option("-o,--out", gc_out, "output .omp path");
  compile->add_option("--target-mae", gc_target);
  compile->add_option("--max-k", gc_maxk);
  compile->add_option("--forced-k", gc_forcedk, "skip order search, use exactly (k,k)");
  compile->add_option("--method", gc_method)->check(CLI::IsMember({"taylor", "lstsq"}));
  compile->add_option("--hw", gc_hw, "R,C,sram_bytes");
  compile->add_flag("--disasm", gc_disasm, "print disassembly");
  compile->callback([&] {
    graph::Graph g = graph::parse_graph(read_file(gc_in));
    compiler::HwConfig hw;
    apply_hw_flag(hw, gc_hw);
    compiler::CompileOptions opts;
    opts.target_mae = gc_target;
    opts.max_pade_k = gc_maxk;
    opts.forced_k = gc_forcedk;
    opts.fit.method = gc_method == "taylor" ? pade::FitMethod::TaylorMatch
                                            : pade::FitMethod::LeastSquares;
    isa::Program p = compiler::lower(g, hw, opts);
    std::string out = gc_out.empty() ? fs::path(gc_in).replace_extension(".omp").string() : gc_out;
    isa::save_program(out, p);
    if (gc_disasm) std::cout << isa::disassemble(p);
    std::cerr << "wrote " << out << " (" << p.bundles.size() << " bundles)\n";
  });

  // ---- run ----
  auto* runc = app.add_subcommand("run", "simulate an .omp program");
  std::string rn_prog, rn_inputs, rn_outdir, rn_report, rn_trace;
  bool rn_int8 = false;
  CommonSimFlags rn_flags;
  runc->add_option("program", rn_prog)->required()->check(CLI::ExistingFile);
  runc->add_option("--inputs", rn_inputs, "directory of <id>.omt tensors (missing ids are seeded random)");
  runc->add_option("--out", rn_outdir, "directory for produced tensors");
  runc->add_option("--report", rn_report, "SimReport JSON path (default stdout)");
  runc->add_option("--trace", rn_trace, "per-cycle event CSV path");
  runc->add_flag("--int8", rn_int8, "post-training INT8 execution");
  rn_flags.attach(runc);
  runc->callback([&] {
    isa::Program p = isa::load_program(rn_prog);
    machine::SimConfig cfg;
    cfg.hw.rows = p.header.rows;
    cfg.hw.cols = p.header.cols;
    cfg.hw.sram_bytes = p.header.sram_bytes;
    rn_flags.apply(cfg);
    cfg.trace = !rn_trace.empty();
    auto inputs = gather_inputs(p, rn_inputs, rn_flags.seed);
    if (rn_int8) {
      cfg.quant = calibrate_via_f32(p, inputs, cfg);
      cfg.precision = refexec::Precision::Int8;
    }
    auto [outputs, rep] = machine::run(p, inputs, cfg);
    if (!rn_outdir.empty()) {
      fs::create_directories(rn_outdir);
      for (const auto& [id, t] : outputs)
        refexec::save_tensor((fs::path(rn_outdir) / (id + ".omt")).string(), t);
    }
    json j = report_to_json(rep, !rn_flags.no_timestamp);
    if (!rn_report.empty()) write_text(rn_report, j.dump(2) + "\n");
    else std::cout << j.dump(2) << "\n";
    if (!rn_trace.empty()) {
      std::ostringstream os;
      os << "cycle,unit,event\n";
      for (const auto& ev : rep.trace) os << ev.cycle << "," << ev.unit << "," << ev.event << "\n";
      write_text(rn_trace, os.str());
    }
  });

  // ---- sweep ----
  auto* sweep = app.add_subcommand("sweep", "accuracy/throughput sweep over Padé orders");
  std::string sw_in, sw_out, sw_hw, sw_method = "lstsq";
  std::size_t sw_kmin = 3, sw_kmax = 6;
  CommonSimFlags sw_flags;
  sweep->add_option("graph", sw_in)->required()->check(CLI::ExistingFile);
  sweep->add_option("-o,--out", sw_out, "CSV path (default stdout)");
  sweep->add_option("--kmin", sw_kmin);
  sweep->add_option("--kmax", sw_kmax);
  sweep->add_option("--method", sw_method)->check(CLI::IsMember({"taylor", "lstsq"}));
  sweep->add_option("--hw", sw_hw, "R,C,sram_bytes");
  sw_flags.attach(sweep);
  sweep->callback([&] {
    graph::Graph g = graph::parse_graph(read_file(sw_in));
    compiler::HwConfig hw;
    apply_hw_flag(hw, sw_hw);
    hw.broadcast_width = sw_flags.broadcast_width;
    std::set<std::string> fns;
    for (const auto& n : g.nodes)
      if (n.kind == graph::OpKind::Activation) fns.insert(n.attr_str("fn", "tanh"));
    std::mt19937 rng(sw_flags.seed);
    std::map<std::string, refexec::TensorValue> inputs;
    for (const auto& id : g.inputs) inputs[id] = random_tensor(g.tensors.at(id), rng);
    std::size_t out_elems = 0;
    for (const auto& id : g.outputs) out_elems += g.tensors.at(id).elem_count();
    std::ostringstream os;
    os << "pade_k";
    for (const auto& fn : fns) os << ",mae(" << fn << ")";
    os << ",total_cycles,throughput_elems_per_cycle,utilization\n";
    for (std::size_t k = sw_kmin; k <= sw_kmax; ++k) {
      compiler::CompileOptions opts;
      opts.forced_k = k;
      opts.fit.method = sw_method == "taylor" ? pade::FitMethod::TaylorMatch
                                              : pade::FitMethod::LeastSquares;
      isa::Program p = compiler::lower(g, hw, opts);
      machine::SimConfig cfg;
      cfg.hw = hw;
      sw_flags.apply(cfg);
      auto [outputs, rep] = machine::run(p, inputs, cfg);
      os << k;
      for (const auto& fn : fns) {
        pade::FunctionSpec spec = pade::builtin_spec(fn);
        pade::PadeApproximant ap = opts.fit.method == pade::FitMethod::TaylorMatch
                                       ? pade::fit_taylor_pade(spec.taylor(0.0, 2 * k + 1), k, k,
                                                               spec.default_range)
                                       : pade::fit_least_squares(spec, k, k, spec.default_range);
        os << "," << pade::max_abs_error(ap, spec, spec.default_range, 1001);
      }
      double tput = rep.total_cycles ? static_cast<double>(out_elems) / rep.total_cycles : 0.0;
      os << "," << rep.total_cycles << "," << tput << "," << rep.utilization << "\n";
    }
    if (!sw_out.empty()) write_text(sw_out, os.str());
    else std::cout << os.str();
  });

  // ---- profile ----
  auto* prof = app.add_subcommand("profile", "static workload profile of a graph");
  std::string pf_in, pf_out;
  prof->add_option("graph", pf_in)->required()->check(CLI::ExistingFile);
  prof->add_option("-o,--out", pf_out, "JSON path (default stdout)");
  prof->callback([&] {
    graph::Graph g = graph::parse_graph(read_file(pf_in));
    graph::WorkloadProfile w = graph::profile(g);
    json j{{"linear_op_count", w.linear_op_count},
           {"nonlinear_op_count", w.nonlinear_op_count},
           {"neural_op_count", w.neural_op_count},
           {"symbolic_op_count", w.symbolic_op_count},
           {"linear_pct", w.linear_pct},
           {"nonlinear_pct", w.nonlinear_pct},
           {"neural_pct", w.neural_pct},
           {"symbolic_pct", w.symbolic_pct}};
    if (!pf_out.empty()) write_text(pf_out, j.dump(2) + "\n");
    else std::cout << j.dump(2) << "\n";
  });

  // ---- compare ----
  auto* cmp = app.add_subcommand("compare", "bypass vs two-level baseline on one graph");
  std::string cp_in, cp_out, cp_hw;
  double cp_target = 1e-3;
  CommonSimFlags cp_flags;
  cmp->add_option("graph", cp_in)->required()->check(CLI::ExistingFile);
  cmp->add_option("-o,--out", cp_out, "JSON path (default stdout)");
  cmp->add_option("--hw", cp_hw, "R,C,sram_bytes");
  cmp->add_option("--target-mae", cp_target);
  cp_flags.attach(cmp);
  cmp->callback([&] {
    graph::Graph g = graph::parse_graph(read_file(cp_in));
    compiler::HwConfig hw;
    apply_hw_flag(hw, cp_hw);
    hw.broadcast_width = cp_flags.broadcast_width;
    compiler::CompileOptions cp_opts;
    cp_opts.target_mae = cp_target;
    isa::Program p = compiler::lower(g, hw, cp_opts);
    std::mt19937 rng(cp_flags.seed);
    std::map<std::string, refexec::TensorValue> inputs;
    for (const auto& id : g.inputs) inputs[id] = random_tensor(g.tensors.at(id), rng);
    json results;
    auto one = [&](const std::string& name, machine::Mode mode, machine::CircImpl circ) {
      machine::SimConfig cfg;
      cfg.hw = hw;
      cfg.mode = mode;
      cfg.circ_impl = circ;
      auto [outputs, rep] = machine::run(p, inputs, cfg);
      results[name] = report_to_json(rep, false);
      results[name].erase("bundles");
    };
    one("bypass", machine::Mode::Bypass, machine::CircImpl::AddressOffset);
    one("baseline", machine::Mode::TwoLevelBaseline, machine::CircImpl::AddressOffset);
    one("bypass_shift", machine::Mode::Bypass, machine::CircImpl::ShiftRegisterBaseline);
    one("baseline_shift", machine::Mode::TwoLevelBaseline, machine::CircImpl::ShiftRegisterBaseline);
    json j{{"graph", fs::path(cp_in).filename().string()}, {"results", results}};
    if (!cp_flags.no_timestamp)
      j["timestamp"] = std::chrono::duration_cast<std::chrono::seconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                           .count();
    if (!cp_out.empty()) write_text(cp_out, j.dump(2) + "\n");
    else std::cout << j.dump(2) << "\n";
  });

  // ---- disasm ----
  auto* dis = app.add_subcommand("disasm", "print a program listing");
  std::string ds_in;
  dis->add_option("program", ds_in)->required()->check(CLI::ExistingFile);
  dis->callback([&] { std::cout << isa::disassemble(isa::load_program(ds_in)); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_main(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
