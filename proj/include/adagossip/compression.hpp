#ifndef ADAGOSSIP_COMPRESSION_HPP_
#define ADAGOSSIP_COMPRESSION_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "adagossip/errors.hpp"

namespace adagossip {

enum class CompressorKind { identity, top_k, uniform_quant };

struct CompressorSpec {
  CompressorKind kind = CompressorKind::identity;
  double sparsity = 0.0;  // fraction of entries dropped (top_k)
  int bits = 8;           // code width (uniform_quant)

  static CompressorSpec identity() { return {}; }
  static CompressorSpec top_k(double sparsity) {
    return {CompressorKind::top_k, sparsity, 8};
  }
  static CompressorSpec quant(int bits) { return {CompressorKind::uniform_quant, 0.0, bits}; }

  void validate() const {
    if (kind == CompressorKind::top_k && !(sparsity >= 0.0 && sparsity < 1.0)) {
      throw CompressionError("top-k sparsity must lie in [0,1)");
    }
    if (kind == CompressorKind::uniform_quant && (bits < 1 || bits > 16)) {
      throw CompressionError("quantizer bit width must lie in [1,16]");
    }
  }

  /// Entries kept by top-k for a d-dimensional input.
  std::size_t kept_entries(std::size_t dim) const {
    const auto k = static_cast<std::size_t>(std::llround((1.0 - sparsity) * static_cast<double>(dim)));
    return std::clamp<std::size_t>(k, 1, dim);
  }

  bool operator==(const CompressorSpec&) const = default;
};

/// Canonical CLI form: `none`, `topk:F` or `quant:B`.
inline std::string to_string(const CompressorSpec& spec) {
  switch (spec.kind) {
    case CompressorKind::identity: return "none";
    case CompressorKind::top_k: {
      std::ostringstream os;
      os << "topk:" << spec.sparsity;
      return os.str();
    }
    case CompressorKind::uniform_quant: return "quant:" + std::to_string(spec.bits);
  }
  return "?";
}

inline CompressorSpec parse_compressor(std::string_view text) {
  const std::string s(text);
  if (s == "none" || s == "identity") return CompressorSpec::identity();
  auto number_after = [&s](std::size_t prefix) {
    const std::string tail = s.substr(prefix);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tail, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (tail.empty() || used != tail.size()) {
      throw CompressionError("malformed compressor `" + s + "`");
    }
    return v;
  };
  CompressorSpec spec;
  if (s.starts_with("topk:")) {
    spec = CompressorSpec::top_k(number_after(5));
  } else if (s.starts_with("quant:")) {
    const double b = number_after(6);
    if (b != std::floor(b)) throw CompressionError("quantizer bits must be an integer");
    spec = CompressorSpec::quant(static_cast<int>(b));
  } else {
    throw CompressionError("unknown compressor `" + s + "` (expected none, topk:F, quant:B)");
  }
  spec.validate();
  return spec;
}

struct DenseBody {
  std::vector<double> values;
};

struct SparseBody {
  std::vector<std::uint32_t> indices;  // strictly increasing
  std::vector<double> values;
};

struct QuantizedBody {
  int bits = 8;
  double scale = 0.0;
  std::vector<std::uint32_t> codes;  // each < 2^bits
};

/// Wire form of a compressed message. Values are held in double precision;
/// the byte accounting charges 32-bit floats.
struct CompressedPayload {
  std::size_t dim = 0;
  std::variant<DenseBody, SparseBody, QuantizedBody> body;

  bool operator==(const CompressedPayload& o) const {
    if (dim != o.dim || body.index() != o.body.index()) return false;
    if (auto* a = std::get_if<DenseBody>(&body)) return a->values == std::get<DenseBody>(o.body).values;
    if (auto* a = std::get_if<SparseBody>(&body)) {
      const auto& b = std::get<SparseBody>(o.body);
      return a->indices == b.indices && a->values == b.values;
    }
    const auto& a = std::get<QuantizedBody>(body);
    const auto& b = std::get<QuantizedBody>(o.body);
    return a.bits == b.bits && a.scale == b.scale && a.codes == b.codes;
  }
};

namespace detail {

inline void check_input(std::span<const double> v) {
  if (v.empty()) throw CompressionError("cannot compress an empty vector");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw CompressionError("non-finite value at index " + std::to_string(i));
    }
  }
}

inline double quant_levels(int bits) { return static_cast<double>((1u << bits) - 1u); }

}  // namespace detail

inline CompressedPayload compress(const CompressorSpec& spec, std::span<const double> v) {
  spec.validate();
  detail::check_input(v);
  CompressedPayload p;
  p.dim = v.size();
  switch (spec.kind) {
    case CompressorKind::identity:
      p.body = DenseBody{{v.begin(), v.end()}};
      break;
    case CompressorKind::top_k: {
      const std::size_t k = spec.kept_entries(v.size());
      std::vector<std::uint32_t> order(v.size());
      std::iota(order.begin(), order.end(), 0u);
      // Larger magnitude first; equal magnitudes resolved toward the lower index.
      auto before = [&v](std::uint32_t a, std::uint32_t b) {
        const double ma = std::abs(v[a]);
        const double mb = std::abs(v[b]);
        return ma > mb || (ma == mb && a < b);
      };
      if (k < v.size()) std::nth_element(order.begin(), order.begin() + k, order.end(), before);
      order.resize(k);
      std::sort(order.begin(), order.end());
      SparseBody body;
      body.indices = std::move(order);
      body.values.reserve(k);
      for (auto idx : body.indices) body.values.push_back(v[idx]);
      p.body = std::move(body);
      break;
    }
    case CompressorKind::uniform_quant: {
      QuantizedBody body;
      body.bits = spec.bits;
      double s = 0.0;
      for (double x : v) s = std::max(s, std::abs(x));
      body.scale = s;
      body.codes.assign(v.size(), 0u);
      if (s > 0.0) {
        const double levels = detail::quant_levels(spec.bits);
        for (std::size_t i = 0; i < v.size(); ++i) {
          const double code = std::round((v[i] + s) / (2.0 * s) * levels);
          body.codes[i] = static_cast<std::uint32_t>(std::clamp(code, 0.0, levels));
        }
      }
      p.body = std::move(body);
      break;
    }
  }
  return p;
}

/// Adds the reconstructed message into `out` (out += decompress(p)).
inline void accumulate_decompressed(const CompressedPayload& p, std::span<double> out) {
  if (out.size() != p.dim) {
    throw CompressionError("payload dimension " + std::to_string(p.dim) +
                           " does not match target of size " + std::to_string(out.size()));
  }
  if (const auto* dense = std::get_if<DenseBody>(&p.body)) {
    if (dense->values.size() != p.dim) throw CompressionError("dense payload length mismatch");
    for (std::size_t i = 0; i < p.dim; ++i) out[i] += dense->values[i];
  } else if (const auto* sparse = std::get_if<SparseBody>(&p.body)) {
    if (sparse->indices.size() != sparse->values.size()) {
      throw CompressionError("sparse payload has mismatched index/value counts");
    }
    for (std::size_t k = 0; k < sparse->indices.size(); ++k) {
      const auto idx = sparse->indices[k];
      if (idx >= p.dim) {
        throw CompressionError("sparse index " + std::to_string(idx) + " out of range for dim " +
                               std::to_string(p.dim));
      }
      if (k > 0 && idx <= sparse->indices[k - 1]) {
        throw CompressionError("sparse indices are not strictly increasing");
      }
      out[idx] += sparse->values[k];
    }
  } else {
    const auto& q = std::get<QuantizedBody>(p.body);
    if (q.codes.size() != p.dim) throw CompressionError("quantized payload length mismatch");
    if (q.bits < 1 || q.bits > 16) throw CompressionError("quantized payload has invalid bit width");
    const double levels = detail::quant_levels(q.bits);
    for (std::size_t i = 0; i < p.dim; ++i) {
      if (q.codes[i] > static_cast<std::uint32_t>(levels)) {
        throw CompressionError("code " + std::to_string(q.codes[i]) + " at index " +
                               std::to_string(i) + " exceeds " + std::to_string(q.bits) +
                               "-bit range");
      }
      out[i] += static_cast<double>(q.codes[i]) / levels * 2.0 * q.scale - q.scale;
    }
  }
}

inline std::vector<double> decompress(const CompressedPayload& p) {
  std::vector<double> out(p.dim, 0.0);
  accumulate_decompressed(p, out);
  return out;
}

/// Bytes on the wire: 4 per dense value, 4+2 per kept sparse entry,
/// ceil(bits*d/8) for quantized codes (scale not charged).
inline std::uint64_t payload_bytes(const CompressedPayload& p) {
  if (std::holds_alternative<DenseBody>(p.body)) return 4ull * p.dim;
  if (const auto* sparse = std::get_if<SparseBody>(&p.body)) return 6ull * sparse->indices.size();
  const auto& q = std::get<QuantizedBody>(p.body);
  return (static_cast<std::uint64_t>(q.bits) * p.dim + 7) / 8;
}

/// Same accounting as payload_bytes, computed from the spec alone.
inline std::uint64_t payload_bytes(const CompressorSpec& spec, std::size_t dim) {
  switch (spec.kind) {
    case CompressorKind::identity: return 4ull * dim;
    case CompressorKind::top_k: return 6ull * spec.kept_entries(dim);
    case CompressorKind::uniform_quant:
      return (static_cast<std::uint64_t>(spec.bits) * dim + 7) / 8;
  }
  return 0;
}

}  // namespace adagossip

#endif  // ADAGOSSIP_COMPRESSION_HPP_
