#ifndef OVERMIND_REFEXEC_HPP
#define OVERMIND_REFEXEC_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "overmind/errors.hpp"
#include "overmind/graph.hpp"
#include "overmind/pade.hpp"

namespace overmind::refexec {

using graph::DType;
using graph::Graph;
using graph::OpKind;
using graph::OpNode;
using graph::TensorMeta;

struct TensorValue {
  TensorMeta meta;
  std::vector<float> f32;
  std::vector<std::int8_t> i8;
  std::vector<std::int32_t> i32;

  std::size_t size() const {
    switch (meta.dtype) {
      case DType::F32: return f32.size();
      case DType::I8: return i8.size();
      case DType::I32: return i32.size();
    }
    return 0;
  }
  static TensorValue zeros(TensorMeta m) {
    TensorValue t;
    std::size_t n = m.elem_count();
    switch (m.dtype) {
      case DType::F32: t.f32.assign(n, 0.0f); break;
      case DType::I8: t.i8.assign(n, 0); break;
      case DType::I32: t.i32.assign(n, 0); break;
    }
    t.meta = std::move(m);
    return t;
  }
};

// Symmetric per-tensor scale, zero point fixed at 0.
struct QuantParams {
  double scale = 1.0;
};
using QuantMap = std::map<std::string, QuantParams>;

enum class Precision { F32, Int8 };

struct ExecOptions {
  Precision precision = Precision::F32;
  QuantMap quant;  // required for Int8: one entry per tensor id
  // When non-empty, Activation nodes evaluate these approximants instead of
  // the exact transcendental (keyed by function id).
  std::map<std::string, pade::PadeApproximant> activation_approx;
};

// --- scalar kernels (shared with the cycle-level machine) -----------------

namespace kernels {

// Round half to even, saturate to [-128, 127].
inline std::int8_t quantize(double x, double scale) {
  double r = std::nearbyint(x / scale);
  r = std::clamp(r, -128.0, 127.0);
  return static_cast<std::int8_t>(r);
}

inline double dequantize(std::int8_t v, double scale) {
  return static_cast<double>(v) * scale;
}

// Requantize an i32 MAC accumulator whose operands carried scales sa, sb.
inline std::int8_t requant_acc(std::int32_t acc, double sa, double sb, double so) {
  return quantize(static_cast<double>(acc) * sa * sb, so);
}

inline double fuzzy_and(double x, double y) { return x * y; }
inline double fuzzy_or(double x, double y) { return x + y - x * y; }
inline double fuzzy_not(double x) { return 1.0 - x; }

inline double activation_exact(const std::string& fn, double x) {
  return pade::builtin_spec(fn).f(x);
}

}  // namespace kernels

inline QuantParams calibrate(const TensorValue& t) {
  if (t.meta.dtype != DType::F32 || t.f32.empty())
    throw CalibrationError("calibration needs a non-empty f32 tensor");
  double max_abs = 0.0;
  for (float v : t.f32) {
    if (!std::isfinite(v)) throw CalibrationError("non-finite element in '" + t.meta.id + "'");
    max_abs = std::max(max_abs, std::abs(static_cast<double>(v)));
  }
  return {max_abs > 0.0 ? max_abs / 127.0 : 1.0};
}

inline std::int8_t quantize(double x, const QuantParams& q) { return kernels::quantize(x, q.scale); }
inline double dequantize(std::int8_t v, const QuantParams& q) { return kernels::dequantize(v, q.scale); }

namespace detail {

inline double scale_of(const ExecOptions& opts, const std::string& id) {
  auto it = opts.quant.find(id);
  if (it == opts.quant.end()) throw MissingCalibration("no QuantParams for tensor '" + id + "'");
  return it->second.scale;
}

inline TensorValue quantize_tensor(const TensorValue& t, double scale) {
  TensorValue q;
  q.meta = t.meta;
  q.meta.dtype = DType::I8;
  q.i8.reserve(t.f32.size());
  for (float v : t.f32) q.i8.push_back(kernels::quantize(v, scale));
  return q;
}

struct ApproxOrExact {
  const pade::PadeApproximant* approx = nullptr;
  std::string fn;
  double operator()(double x) const {
    return approx ? pade::eval(*approx, x) : kernels::activation_exact(fn, x);
  }
};

inline ApproxOrExact activation_fn(const ExecOptions& opts, const OpNode& node) {
  ApproxOrExact a;
  a.fn = node.attr_str("fn", "tanh");
  auto it = opts.activation_approx.find(a.fn);
  if (it != opts.activation_approx.end()) a.approx = &it->second;
  return a;
}

}  // namespace detail

// Executes one node given resolved input values. Exposed so the machine model
// can share exact semantics for its functional path.
inline TensorValue execute_node(const Graph& g, const OpNode& node,
                                const std::vector<const TensorValue*>& in,
                                const ExecOptions& opts) {
  TensorMeta out_meta = g.tensors.at(node.output);
  const bool int8 = opts.precision == Precision::Int8;
  if (int8 && out_meta.dtype == DType::F32) out_meta.dtype = DType::I8;
  TensorValue out = TensorValue::zeros(out_meta);
  auto in_shape = [&](std::size_t i) { return in[i]->meta.shape; };
  for (std::size_t i = 0; i < in.size(); ++i)
    if (in[i]->size() != in[i]->meta.elem_count())
      throw ShapeError("payload/shape mismatch on '" + in[i]->meta.id + "'");

  double sa = 1.0, sb = 1.0, so = 1.0;
  if (int8) {
    sa = detail::scale_of(opts, node.inputs[0]);
    if (node.inputs.size() > 1) sb = detail::scale_of(opts, node.inputs[1]);
    if (out.meta.dtype == DType::I8) so = detail::scale_of(opts, node.output);
  }

  switch (node.kind) {
    case OpKind::MatMul: {
      auto a = in_shape(0), b = in_shape(1);
      std::size_t M = a[0], K = a[1], N = b[1];
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < N; ++j) {
          if (int8) {
            std::int32_t acc = 0;
            for (std::size_t k = 0; k < K; ++k)
              acc += static_cast<std::int32_t>(in[0]->i8[i * K + k]) * in[1]->i8[k * N + j];
            out.i8[i * N + j] = kernels::requant_acc(acc, sa, sb, so);
          } else {
            float acc = 0.0f;
            for (std::size_t k = 0; k < K; ++k)
              acc += in[0]->f32[i * K + k] * in[1]->f32[k * N + j];
            out.f32[i * N + j] = acc;
          }
        }
      break;
    }
    case OpKind::Conv2D: {
      auto ish = in_shape(0), ksh = in_shape(1);
      std::size_t stride = node.attr_uint("stride", 1);
      std::size_t Ho = out.meta.shape[0], Wo = out.meta.shape[1];
      for (std::size_t oy = 0; oy < Ho; ++oy)
        for (std::size_t ox = 0; ox < Wo; ++ox) {
          if (int8) {
            std::int32_t acc = 0;
            for (std::size_t ky = 0; ky < ksh[0]; ++ky)
              for (std::size_t kx = 0; kx < ksh[1]; ++kx)
                acc += static_cast<std::int32_t>(in[0]->i8[(oy * stride + ky) * ish[1] + ox * stride + kx]) *
                       in[1]->i8[ky * ksh[1] + kx];
            out.i8[oy * Wo + ox] = kernels::requant_acc(acc, sa, sb, so);
          } else {
            float acc = 0.0f;
            for (std::size_t ky = 0; ky < ksh[0]; ++ky)
              for (std::size_t kx = 0; kx < ksh[1]; ++kx)
                acc += in[0]->f32[(oy * stride + ky) * ish[1] + ox * stride + kx] *
                       in[1]->f32[ky * ksh[1] + kx];
            out.f32[oy * Wo + ox] = acc;
          }
        }
      break;
    }
    case OpKind::ElemAdd:
    case OpKind::ElemMul: {
      std::size_t n = out.meta.elem_count();
      for (std::size_t i = 0; i < n; ++i) {
        if (int8) {
          if (node.kind == OpKind::ElemAdd) {
            double v = kernels::dequantize(in[0]->i8[i], sa) + kernels::dequantize(in[1]->i8[i], sb);
            out.i8[i] = kernels::quantize(v, so);
          } else {
            std::int32_t acc = static_cast<std::int32_t>(in[0]->i8[i]) * in[1]->i8[i];
            out.i8[i] = kernels::requant_acc(acc, sa, sb, so);
          }
        } else {
          out.f32[i] = node.kind == OpKind::ElemAdd ? in[0]->f32[i] + in[1]->f32[i]
                                                    : in[0]->f32[i] * in[1]->f32[i];
        }
      }
      break;
    }
    case OpKind::Activation: {
      auto fn = detail::activation_fn(opts, node);
      std::size_t n = out.meta.elem_count();
      for (std::size_t i = 0; i < n; ++i) {
        if (int8) {
          double y = fn(kernels::dequantize(in[0]->i8[i], sa));
          out.i8[i] = kernels::quantize(y, so);
        } else {
          out.f32[i] = static_cast<float>(fn(static_cast<double>(in[0]->f32[i])));
        }
      }
      break;
    }
    case OpKind::CircularConv: {
      std::size_t N = node.attr_uint("N", out.meta.elem_count());
      // C[i] = sum_j A[j] * B[(i - j) mod N], j ascending
      for (std::size_t i = 0; i < N; ++i) {
        if (int8) {
          std::int32_t acc = 0;
          for (std::size_t j = 0; j < N; ++j)
            acc += static_cast<std::int32_t>(in[0]->i8[j]) * in[1]->i8[(i + N - j) % N];
          out.i8[i] = kernels::requant_acc(acc, sa, sb, so);
        } else {
          float acc = 0.0f;
          for (std::size_t j = 0; j < N; ++j)
            acc += in[0]->f32[j] * in[1]->f32[(i + N - j) % N];
          out.f32[i] = acc;
        }
      }
      break;
    }
    case OpKind::SimilaritySearch: {
      auto q = in_shape(0), cb = in_shape(1);
      std::size_t Q = q[0], D = q[1], Kk = cb[0];
      bool cosine = node.attr_str("metric", "dot") == "cosine";
      for (std::size_t qi = 0; qi < Q; ++qi) {
        std::size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < Kk; ++r) {
          double score;
          if (int8) {
            std::int32_t acc = 0;
            for (std::size_t d = 0; d < D; ++d)
              acc += static_cast<std::int32_t>(in[0]->i8[qi * D + d]) * in[1]->i8[r * D + d];
            score = static_cast<double>(acc);
          } else {
            double acc = 0.0;
            for (std::size_t d = 0; d < D; ++d)
              acc += static_cast<double>(in[0]->f32[qi * D + d]) * in[1]->f32[r * D + d];
            score = acc;
          }
          if (cosine) {
            double nq = 0.0, nr = 0.0;
            for (std::size_t d = 0; d < D; ++d) {
              double qv = int8 ? static_cast<double>(in[0]->i8[qi * D + d]) : in[0]->f32[qi * D + d];
              double rv = int8 ? static_cast<double>(in[1]->i8[r * D + d]) : in[1]->f32[r * D + d];
              nq += qv * qv;
              nr += rv * rv;
            }
            double denom = std::sqrt(nq) * std::sqrt(nr);
            score = denom > 0 ? score / denom : 0.0;
          }
          if (score > best_score) {
            best_score = score;
            best = r;
          }
        }
        out.i32[qi] = static_cast<std::int32_t>(best);
      }
      break;
    }
    case OpKind::FuzzyAnd:
    case OpKind::FuzzyOr:
    case OpKind::FuzzyNot: {
      std::size_t n = out.meta.elem_count();
      for (std::size_t i = 0; i < n; ++i) {
        double x = int8 ? kernels::dequantize(in[0]->i8[i], sa) : in[0]->f32[i];
        double y = 0.0;
        if (node.kind != OpKind::FuzzyNot)
          y = int8 ? kernels::dequantize(in[1]->i8[i], sb) : in[1]->f32[i];
        double v = node.kind == OpKind::FuzzyAnd ? kernels::fuzzy_and(x, y)
                   : node.kind == OpKind::FuzzyOr ? kernels::fuzzy_or(x, y)
                                                  : kernels::fuzzy_not(x);
        if (int8) out.i8[i] = kernels::quantize(v, so);
        else out.f32[i] = static_cast<float>(v);
      }
      break;
    }
  }
  return out;
}

inline std::map<std::string, TensorValue> execute_reference(
    const Graph& g, const std::map<std::string, TensorValue>& inputs, const ExecOptions& opts = {}) {
  std::map<std::string, TensorValue> env;
  const bool int8 = opts.precision == Precision::Int8;
  for (const auto& id : g.inputs) {
    auto it = inputs.find(id);
    if (it == inputs.end()) throw ShapeError("missing input tensor '" + id + "'");
    const TensorMeta& want = g.tensors.at(id);
    if (it->second.meta.shape != want.shape)
      throw ShapeError("shape mismatch on input '" + id + "'");
    if (int8 && want.dtype == DType::F32) {
      env[id] = detail::quantize_tensor(it->second, detail::scale_of(opts, id));
      env[id].meta.id = id;
    } else {
      env[id] = it->second;
      env[id].meta = want;
    }
  }
  for (const OpNode* node : graph::topo_order(g)) {
    std::vector<const TensorValue*> in;
    in.reserve(node->inputs.size());
    for (const auto& t : node->inputs) in.push_back(&env.at(t));
    TensorValue out = execute_node(g, *node, in, opts);
    out.meta.id = node->output;
    env[node->output] = std::move(out);
  }
  std::map<std::string, TensorValue> result;
  for (const auto& id : g.outputs) result[id] = env.at(id);
  return result;
}

// Run the f32 reference and derive symmetric scales for every tensor.
inline QuantMap calibrate_graph(const Graph& g, const std::map<std::string, TensorValue>& inputs,
                                const std::map<std::string, pade::PadeApproximant>& approx = {}) {
  ExecOptions f32opts;
  f32opts.activation_approx = approx;
  std::map<std::string, TensorValue> env;
  for (const auto& id : g.inputs) env[id] = inputs.at(id);
  QuantMap q;
  for (const auto& id : g.inputs) {
    env[id].meta = g.tensors.at(id);
    q[id] = calibrate(env[id]);
  }
  for (const OpNode* node : graph::topo_order(g)) {
    std::vector<const TensorValue*> in;
    for (const auto& t : node->inputs) in.push_back(&env.at(t));
    TensorValue out = execute_node(g, *node, in, f32opts);
    out.meta.id = node->output;
    q[node->output] = out.meta.dtype == DType::F32 ? calibrate(out) : QuantParams{1.0};
    env[node->output] = std::move(out);
  }
  return q;
}

// --- "OMT1" tensor file format -------------------------------------------

inline void write_tensor(std::ostream& os, const TensorValue& t) {
  os.write("OMT1", 4);
  std::uint8_t dtype = static_cast<std::uint8_t>(t.meta.dtype);
  std::uint8_t ndim = static_cast<std::uint8_t>(t.meta.shape.size());
  os.put(static_cast<char>(dtype));
  os.put(static_cast<char>(ndim));
  for (std::size_t d : t.meta.shape) {
    std::uint32_t v = static_cast<std::uint32_t>(d);
    os.write(reinterpret_cast<const char*>(&v), 4);
  }
  switch (t.meta.dtype) {
    case DType::F32:
      os.write(reinterpret_cast<const char*>(t.f32.data()), static_cast<std::streamsize>(t.f32.size() * 4));
      break;
    case DType::I8:
      os.write(reinterpret_cast<const char*>(t.i8.data()), static_cast<std::streamsize>(t.i8.size()));
      break;
    case DType::I32:
      os.write(reinterpret_cast<const char*>(t.i32.data()), static_cast<std::streamsize>(t.i32.size() * 4));
      break;
  }
}

inline TensorValue read_tensor(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "OMT1", 4) != 0)
    throw FormatError(0, "bad tensor magic");
  int dtype = is.get(), ndim = is.get();
  if (dtype < 0 || dtype > 2 || ndim < 0) throw FormatError(4, "bad tensor header");
  TensorMeta m;
  m.dtype = static_cast<DType>(dtype);
  for (int i = 0; i < ndim; ++i) {
    std::uint32_t d = 0;
    if (!is.read(reinterpret_cast<char*>(&d), 4)) throw FormatError(6, "truncated dims");
    m.shape.push_back(d);
  }
  m.strides = graph::row_major_strides(m.shape);
  TensorValue t = TensorValue::zeros(m);
  std::size_t n = m.elem_count();
  bool ok = true;
  switch (m.dtype) {
    case DType::F32: ok = bool(is.read(reinterpret_cast<char*>(t.f32.data()), static_cast<std::streamsize>(n * 4))); break;
    case DType::I8: ok = bool(is.read(reinterpret_cast<char*>(t.i8.data()), static_cast<std::streamsize>(n))); break;
    case DType::I32: ok = bool(is.read(reinterpret_cast<char*>(t.i32.data()), static_cast<std::streamsize>(n * 4))); break;
  }
  if (!ok) throw FormatError(static_cast<std::size_t>(6 + 4 * ndim), "truncated payload");
  return t;
}

inline void save_tensor(const std::string& path, const TensorValue& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_tensor(os, t);
}

inline TensorValue load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");
  return read_tensor(is);
}

}  // namespace overmind::refexec

#endif
