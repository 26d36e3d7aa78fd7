#ifndef OVERMIND_ISA_HPP
#define OVERMIND_ISA_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "overmind/errors.hpp"
#include "overmind/graph.hpp"

namespace overmind::isa {

using graph::DType;
using graph::OpKind;

enum class Opcode : std::uint8_t {
  MatMul = 0,
  Conv2D,
  ElemAdd,
  ElemMul,
  PadeActivate,
  CircularConv,
  SimilaritySearch,
  FuzzyAnd,
  FuzzyOr,
  FuzzyNot,
};

inline const char* opcode_name(Opcode op) {
  switch (op) {
    case Opcode::MatMul: return "MatMul";
    case Opcode::Conv2D: return "Conv2D";
    case Opcode::ElemAdd: return "ElemAdd";
    case Opcode::ElemMul: return "ElemMul";
    case Opcode::PadeActivate: return "PadeActivate";
    case Opcode::CircularConv: return "CircularConv";
    case Opcode::SimilaritySearch: return "SimilaritySearch";
    case Opcode::FuzzyAnd: return "FuzzyAnd";
    case Opcode::FuzzyOr: return "FuzzyOr";
    case Opcode::FuzzyNot: return "FuzzyNot";
  }
  return "?";
}

enum class Placement : std::uint8_t { Sram = 0, Ddr = 1 };

struct AddressWindowConfig {
  std::uint32_t batch_start = 0;
  std::uint32_t row_lo = 0, row_hi = 0;
  std::uint32_t col_lo = 0, col_hi = 0;
  std::uint32_t circ_offset = 0;
  std::uint32_t modulus = 0;  // 0 = no modular wrap
  bool operator==(const AddressWindowConfig&) const = default;
};

struct PEConfig {
  std::uint16_t rows_used = 0;
  std::uint16_t cols_used = 0;
  std::uint16_t threads_per_row = 1;
  std::uint16_t pade_order = 0;  // 0 = linear mode
  bool divider_enabled = false;
  bool operator==(const PEConfig&) const = default;
};

struct OperandDesc {
  std::string id;
  DType dtype = DType::F32;
  Placement placement = Placement::Sram;
  std::uint32_t base_addr = 0;
  std::vector<std::uint32_t> shape;
  std::vector<std::uint32_t> strides;
  bool operator==(const OperandDesc&) const = default;

  std::size_t elem_count() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.empty() ? 1 : elem_count() / shape[0]; }
};

struct InstructionBundle {
  Opcode opcode = Opcode::ElemAdd;
  std::vector<OperandDesc> operands;  // inputs..., output last
  std::vector<AddressWindowConfig> windows;  // one per set mask bit, ascending row
  std::vector<std::uint8_t> row_enable_mask;  // ceil(R/8) bytes, little-endian bit order
  PEConfig pe_config;
  std::vector<float> pade_a;  // numerator coefficients when opcode == PadeActivate
  std::vector<float> pade_b;
  std::map<std::string, double> attrs;  // e.g. conv stride, circular N, row_base
  bool operator==(const InstructionBundle&) const = default;

  bool row_enabled(std::size_t r) const {
    std::size_t byte = r / 8;
    return byte < row_enable_mask.size() && (row_enable_mask[byte] >> (r % 8)) & 1;
  }
  std::size_t enabled_rows() const {
    std::size_t n = 0;
    for (std::uint8_t b : row_enable_mask) n += static_cast<std::size_t>(std::popcount(b));
    return n;
  }
};

struct ProgramHeader {
  std::uint16_t version = 1;
  std::uint16_t rows = 32;
  std::uint16_t cols = 16;
  std::uint32_t sram_bytes = 32768;
  bool operator==(const ProgramHeader&) const = default;
};

struct Program {
  ProgramHeader header;
  std::vector<InstructionBundle> bundles;
  bool operator==(const Program&) const = default;
};

namespace detail {

struct Writer {
  std::vector<std::uint8_t> out;
  void u8(std::uint8_t v) { out.push_back(v); }
  void u16(std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u32(static_cast<std::uint32_t>(bits));
    u32(static_cast<std::uint32_t>(bits >> 32));
  }
  void str(const std::string& s) {
    u16(static_cast<std::uint16_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
};

struct Reader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos = 0;
  [[noreturn]] void fail(const std::string& what) const { throw FormatError(pos, what); }
  void need(std::size_t n) const {
    if (pos + n > size) throw FormatError(pos, "truncated payload");
  }
  std::uint8_t u8() {
    need(1);
    return data[pos++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(data[pos] | (data[pos + 1] << 8));
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    std::uint64_t lo = u32(), hi = u32();
    std::uint64_t bits = lo | (hi << 32);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    std::uint16_t n = u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(data + pos), n);
    pos += n;
    return s;
  }
};

inline void write_bundle(Writer& w, const InstructionBundle& b) {
  w.u8(static_cast<std::uint8_t>(b.opcode));
  w.u8(static_cast<std::uint8_t>(b.operands.size()));
  for (const auto& op : b.operands) {
    w.str(op.id);
    w.u8(static_cast<std::uint8_t>(op.dtype));
    w.u8(static_cast<std::uint8_t>(op.placement));
    w.u32(op.base_addr);
    w.u8(static_cast<std::uint8_t>(op.shape.size()));
    for (auto d : op.shape) w.u32(d);
    for (auto s : op.strides) w.u32(s);
  }
  w.u16(static_cast<std::uint16_t>(b.row_enable_mask.size()));
  for (auto byte : b.row_enable_mask) w.u8(byte);
  w.u16(static_cast<std::uint16_t>(b.windows.size()));
  for (const auto& win : b.windows) {
    w.u32(win.batch_start);
    w.u32(win.row_lo);
    w.u32(win.row_hi);
    w.u32(win.col_lo);
    w.u32(win.col_hi);
    w.u32(win.circ_offset);
    w.u32(win.modulus);
  }
  w.u16(b.pe_config.rows_used);
  w.u16(b.pe_config.cols_used);
  w.u16(b.pe_config.threads_per_row);
  w.u16(b.pe_config.pade_order);
  w.u8(b.pe_config.divider_enabled ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(b.pade_a.size()));
  w.u32(static_cast<std::uint32_t>(b.pade_b.size()));
  for (float c : b.pade_a) w.f32(c);
  for (float c : b.pade_b) w.f32(c);
  w.u8(static_cast<std::uint8_t>(b.attrs.size()));
  for (const auto& [k, v] : b.attrs) {
    w.str(k);
    w.f64(v);
  }
}

inline void validate_bundle(const InstructionBundle& b, const ProgramHeader& h,
                            std::size_t bundle_index, std::size_t at) {
  auto fail = [&](const std::string& what) {
    throw FormatError(at, "bundle " + std::to_string(bundle_index) + ": " + what);
  };
  if (b.row_enable_mask.size() > (static_cast<std::size_t>(h.rows) + 7) / 8)
    fail("row mask wider than R");
  if (b.windows.size() > h.rows) fail("window table longer than R");
  if (b.enabled_rows() != b.windows.size())
    fail("mask popcount " + std::to_string(b.enabled_rows()) + " != window count " +
         std::to_string(b.windows.size()));
  for (const auto& win : b.windows) {
    if (win.modulus > 0) {
      if (win.circ_offset >= win.modulus) fail("circ_offset >= modulus");
      if (win.col_hi - win.col_lo + 1 > win.modulus) fail("window longer than modulus");
    }
    if (win.row_hi < win.row_lo || win.col_hi < win.col_lo) fail("inverted window bounds");
  }
  if (b.pe_config.cols_used > h.cols) fail("cols_used exceeds C");
  if (b.pe_config.pade_order > 0) {
    std::size_t k = b.pe_config.pade_order;
    if (!b.pe_config.divider_enabled) fail("pade bundle without divider");
    if (b.pe_config.cols_used != 2 * k) fail("pade bundle must use 2k columns");
    if (b.pade_a.size() != k + 1)
      fail("pade order " + std::to_string(k) + " expects " + std::to_string(k + 1) +
           " numerator coefficients, got " + std::to_string(b.pade_a.size()));
    if (b.pade_b.size() != k) fail("denominator coefficient count mismatch");
  } else if (!b.pade_a.empty() || !b.pade_b.empty()) {
    fail("coefficient payload on non-pade bundle");
  }
  if (b.opcode == Opcode::PadeActivate && b.pe_config.pade_order == 0)
    fail("PadeActivate with pade_order 0");
}

inline InstructionBundle read_bundle(Reader& r, const ProgramHeader& h, std::size_t index) {
  std::size_t at = r.pos;
  InstructionBundle b;
  std::uint8_t op = r.u8();
  if (op > static_cast<std::uint8_t>(Opcode::FuzzyNot)) throw FormatError(at, "bad opcode");
  b.opcode = static_cast<Opcode>(op);
  std::uint8_t nops = r.u8();
  for (std::uint8_t i = 0; i < nops; ++i) {
    OperandDesc d;
    d.id = r.str();
    std::uint8_t dt = r.u8();
    if (dt > 2) r.fail("bad dtype");
    d.dtype = static_cast<DType>(dt);
    std::uint8_t pl = r.u8();
    if (pl > 1) r.fail("bad placement");
    d.placement = static_cast<Placement>(pl);
    d.base_addr = r.u32();
    std::uint8_t ndim = r.u8();
    if (ndim > 8) r.fail("rank too large");
    for (std::uint8_t k = 0; k < ndim; ++k) d.shape.push_back(r.u32());
    for (std::uint8_t k = 0; k < ndim; ++k) d.strides.push_back(r.u32());
    for (auto dim : d.shape)
      if (dim == 0) r.fail("zero dimension");
    b.operands.push_back(std::move(d));
  }
  std::uint16_t mask_bytes = r.u16();
  if (mask_bytes > 4096) r.fail("mask too large");
  for (std::uint16_t i = 0; i < mask_bytes; ++i) b.row_enable_mask.push_back(r.u8());
  std::uint16_t nwin = r.u16();
  if (nwin > h.rows) throw FormatError(at, "window table longer than R");
  for (std::uint16_t i = 0; i < nwin; ++i) {
    AddressWindowConfig w;
    w.batch_start = r.u32();
    w.row_lo = r.u32();
    w.row_hi = r.u32();
    w.col_lo = r.u32();
    w.col_hi = r.u32();
    w.circ_offset = r.u32();
    w.modulus = r.u32();
    b.windows.push_back(w);
  }
  b.pe_config.rows_used = r.u16();
  b.pe_config.cols_used = r.u16();
  b.pe_config.threads_per_row = r.u16();
  b.pe_config.pade_order = r.u16();
  b.pe_config.divider_enabled = r.u8() != 0;
  std::uint32_t na = r.u32(), nb = r.u32();
  if (na > 64 || nb > 64) r.fail("coefficient block too large");
  for (std::uint32_t i = 0; i < na; ++i) b.pade_a.push_back(r.f32());
  for (std::uint32_t i = 0; i < nb; ++i) b.pade_b.push_back(r.f32());
  std::uint8_t nattrs = r.u8();
  for (std::uint8_t i = 0; i < nattrs; ++i) {
    std::string key = r.str();
    double val = r.f64();
    if (b.attrs.count(key)) r.fail("duplicate attr");
    b.attrs[key] = val;
  }
  validate_bundle(b, h, index, at);
  return b;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode(const Program& p) {
  detail::Writer w;
  w.out.insert(w.out.end(), {'O', 'M', 'P', '1'});
  w.u16(p.header.version);
  w.u16(p.header.rows);
  w.u16(p.header.cols);
  w.u32(p.header.sram_bytes);
  w.u32(static_cast<std::uint32_t>(p.bundles.size()));
  for (std::size_t i = 0; i < p.bundles.size(); ++i) {
    detail::validate_bundle(p.bundles[i], p.header, i, w.out.size());
    detail::Writer body;
    detail::write_bundle(body, p.bundles[i]);
    w.u32(static_cast<std::uint32_t>(body.out.size()));
    w.out.insert(w.out.end(), body.out.begin(), body.out.end());
  }
  return w.out;
}

inline Program decode(const std::vector<std::uint8_t>& bytes) {
  detail::Reader r{bytes.data(), bytes.size()};
  r.need(4);
  if (std::memcmp(bytes.data(), "OMP1", 4) != 0) throw FormatError(0, "bad magic");
  r.pos = 4;
  Program p;
  p.header.version = r.u16();
  if (p.header.version != 1) throw FormatError(4, "unsupported version " + std::to_string(p.header.version));
  p.header.rows = r.u16();
  p.header.cols = r.u16();
  p.header.sram_bytes = r.u32();
  if (p.header.rows == 0 || p.header.cols == 0) throw FormatError(6, "zero array dimension");
  std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::size_t len_at = r.pos;
    std::uint32_t len = r.u32();
    r.need(len);
    std::size_t expect_end = r.pos + len;
    p.bundles.push_back(detail::read_bundle(r, p.header, i));
    if (r.pos != expect_end) throw FormatError(len_at, "bundle length mismatch");
  }
  if (r.pos != r.size) throw FormatError(r.pos, "trailing bytes");
  return p;
}

inline std::string disassemble(const Program& p) {
  std::ostringstream os;
  os << "omp v" << p.header.version << " R=" << p.header.rows << " C=" << p.header.cols
     << " sram=" << p.header.sram_bytes << " bundles=" << p.bundles.size() << "\n";
  for (std::size_t i = 0; i < p.bundles.size(); ++i) {
    const auto& b = p.bundles[i];
    os << "  [" << i << "] " << opcode_name(b.opcode) << " rows=" << b.pe_config.rows_used
       << " cols=" << b.pe_config.cols_used << " threads=" << b.pe_config.threads_per_row;
    if (b.pe_config.pade_order > 0) os << " pade=" << b.pe_config.pade_order;
    if (!b.windows.empty()) {
      const auto& w = b.windows.front();
      os << " win0=[" << w.row_lo << ":" << w.row_hi << "," << w.col_lo << ":" << w.col_hi << "]";
      if (w.modulus > 0) os << " mod=" << w.modulus << " start=" << w.batch_start;
    }
    os << " ops=";
    for (std::size_t j = 0; j < b.operands.size(); ++j) {
      if (j) os << ",";
      os << b.operands[j].id << (b.operands[j].placement == Placement::Sram ? "@sram" : "@ddr");
    }
    os << "\n";
  }
  return os.str();
}

inline void save_program(const std::string& path, const Program& p) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  auto bytes = encode(p);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline Program load_program(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

}  // namespace overmind::isa

#endif
