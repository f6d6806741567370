#ifndef ADAGOSSIP_MODELS_DATA_HPP_
#define ADAGOSSIP_MODELS_DATA_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "adagossip/errors.hpp"
#include "adagossip/rng.hpp"

namespace adagossip {

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct Dataset {
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;  // samples x input_dim, row-major
  std::vector<int> labels;

  std::size_t samples() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * input_dim, input_dim};
  }
};

/// Gaussian blobs with unit variance. Class c is centred on
/// separation * (e_c - 1/classes), a centred simplex in the first `classes`
/// coordinates; sample i belongs to class i % classes.
inline Dataset generate_synthetic_classification(std::uint64_t seed, std::size_t samples,
                                                 std::size_t input_dim, std::size_t classes,
                                                 double class_separation) {
  if (classes < 2) throw NumericError("need at least 2 classes");
  if (samples < classes) throw NumericError("need at least one sample per class");
  if (input_dim < classes) {
    throw NumericError("input_dim must be >= classes for simplex class means");
  }
  Dataset ds;
  ds.input_dim = input_dim;
  ds.num_classes = classes;
  ds.features.resize(samples * input_dim);
  ds.labels.resize(samples);
  Rng rng = make_rng(seed, 0, "synthetic-blobs");
  std::normal_distribution<double> noise(0.0, 1.0);
  const double offset = class_separation / static_cast<double>(classes);
  for (std::size_t i = 0; i < samples; ++i) {
    const std::size_t c = i % classes;
    ds.labels[i] = static_cast<int>(c);
    double* x = ds.features.data() + i * input_dim;
    for (std::size_t k = 0; k < input_dim; ++k) {
      double mean = 0.0;
      if (k < classes) mean = (k == c ? class_separation : 0.0) - offset;
      x[k] = mean + noise(rng);
    }
  }
  return ds;
}

/// Rows of `ds` selected by `rows`, in that order.
inline Dataset subset(const Dataset& ds, std::span<const std::size_t> rows) {
  Dataset out;
  out.input_dim = ds.input_dim;
  out.num_classes = ds.num_classes;
  out.features.reserve(rows.size() * ds.input_dim);
  for (std::size_t r : rows) {
    const auto x = ds.row(r);
    out.features.insert(out.features.end(), x.begin(), x.end());
    out.labels.push_back(ds.labels[r]);
  }
  return out;
}

struct Partition {
  std::vector<std::vector<std::size_t>> shards;
};

/// Seeded global permutation cut into n equal contiguous shards. The
/// samples % n remainder is dropped.
inline Partition partition_iid(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw NumericError("partition needs at least one agent");
  if (ds.samples() < n) {
    throw NumericError("cannot split " + std::to_string(ds.samples()) + " samples across " +
                       std::to_string(n) + " agents");
  }
  std::vector<std::size_t> perm(ds.samples());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = make_rng(seed, 0, "partition");
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t per = ds.samples() / n;
  Partition p;
  p.shards.resize(n);
  for (std::size_t a = 0; a < n; ++a) {
    p.shards[a].assign(perm.begin() + static_cast<std::ptrdiff_t>(a * per),
                       perm.begin() + static_cast<std::ptrdiff_t>((a + 1) * per));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

enum class ModelKind { logreg, mlp };

/// Dense softmax classifier. Each layer stores a fan_out x fan_in weight
/// block followed by fan_out biases; hidden layers use tanh.
struct ModelSpec {
  ModelKind kind = ModelKind::mlp;
  std::vector<std::size_t> layer_dims;

  static ModelSpec logreg(std::size_t input_dim, std::size_t classes) {
    return {ModelKind::logreg, {input_dim, classes}};
  }
  static ModelSpec mlp(std::vector<std::size_t> dims) { return {ModelKind::mlp, std::move(dims)}; }

  std::size_t param_count() const {
    std::size_t total = 0;
    for (std::size_t l = 1; l < layer_dims.size(); ++l) total += (layer_dims[l - 1] + 1) * layer_dims[l];
    return total;
  }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }

  void validate() const {
    if (layer_dims.size() < 2) throw NumericError("model needs an input and an output layer");
    if (kind == ModelKind::logreg && layer_dims.size() != 2) {
      throw NumericError("logistic regression has exactly one layer");
    }
    for (auto d : layer_dims)
      if (d == 0) throw NumericError("layer width must be positive");
    if (output_dim() < 2) throw NumericError("softmax output needs at least 2 classes");
  }
};

/// Glorot-uniform weights, zero biases; logistic regression starts at zero.
inline std::vector<double> init_params(const ModelSpec& model, Rng& rng) {
  model.validate();
  std::vector<double> params(model.param_count(), 0.0);
  if (model.kind == ModelKind::logreg) return params;
  std::size_t off = 0;
  for (std::size_t l = 1; l < model.layer_dims.size(); ++l) {
    const std::size_t in = model.layer_dims[l - 1];
    const std::size_t out = model.layer_dims[l];
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-a, a);
    for (std::size_t k = 0; k < in * out; ++k) params[off + k] = dist(rng);
    off += (in + 1) * out;
  }
  return params;
}

struct Batch {
  const Dataset& data;
  std::span<const std::size_t> rows;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

namespace detail {

// Forward pass of one sample; fills activations per layer, returns logits.
inline void forward_sample(const ModelSpec& model, std::span<const double> params,
                           std::span<const double> input, std::vector<std::vector<double>>& acts) {
  const std::size_t layers = model.layer_dims.size() - 1;
  acts.resize(layers + 1);
  acts[0].assign(input.begin(), input.end());
  std::size_t off = 0;
  for (std::size_t l = 1; l <= layers; ++l) {
    const std::size_t in = model.layer_dims[l - 1];
    const std::size_t out = model.layer_dims[l];
    const double* w = params.data() + off;
    const double* b = w + in * out;
    auto& z = acts[l];
    z.assign(out, 0.0);
    const auto& prev = acts[l - 1];
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      const double* wrow = w + o * in;
      for (std::size_t k = 0; k < in; ++k) s += wrow[k] * prev[k];
      z[o] = l < layers ? std::tanh(s) : s;
    }
    off += (in + 1) * out;
  }
}

// Softmax cross-entropy on logits; overwrites logits with probabilities.
inline double softmax_xent(std::vector<double>& logits, int label) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    denom += v;
  }
  const double loss = std::log(denom) - std::log(logits[static_cast<std::size_t>(label)]);
  for (double& v : logits) v /= denom;
  return loss;
}

}  // namespace detail

/// Mean softmax cross-entropy over the batch and its exact gradient.
inline LossGrad forward_backward(const ModelSpec& model, std::span<const double> params,
                                 const Batch& batch) {
  if (params.size() != model.param_count()) {
    throw NumericError("parameter vector has " + std::to_string(params.size()) +
                       " entries, model expects " + std::to_string(model.param_count()));
  }
  if (batch.rows.empty()) throw NumericError("empty batch");
  if (batch.data.input_dim != model.input_dim()) throw NumericError("input width mismatch");
  const std::size_t layers = model.layer_dims.size() - 1;
  LossGrad out;
  out.grad.assign(params.size(), 0.0);
  std::vector<std::vector<double>> acts;
  std::vector<double> delta, prev_delta;
  for (std::size_t r : batch.rows) {
    detail::forward_sample(model, params, batch.data.row(r), acts);
    auto& probs = acts[layers];
    const int label = batch.data.labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= model.output_dim()) {
      throw NumericError("label " + std::to_string(label) + " outside model output range");
    }
    out.loss += detail::softmax_xent(probs, label);
    delta = probs;
    delta[static_cast<std::size_t>(label)] -= 1.0;

    std::size_t off = params.size();
    for (std::size_t l = layers; l >= 1; --l) {
      const std::size_t in = model.layer_dims[l - 1];
      const std::size_t o_dim = model.layer_dims[l];
      off -= (in + 1) * o_dim;
      const double* w = params.data() + off;
      double* gw = out.grad.data() + off;
      double* gb = gw + in * o_dim;
      const auto& a_prev = acts[l - 1];
      for (std::size_t o = 0; o < o_dim; ++o) {
        const double dv = delta[o];
        double* grow = gw + o * in;
        for (std::size_t k = 0; k < in; ++k) grow[k] += dv * a_prev[k];
        gb[o] += dv;
      }
      if (l > 1) {
        prev_delta.assign(in, 0.0);
        for (std::size_t o = 0; o < o_dim; ++o) {
          const double* wrow = w + o * in;
          for (std::size_t k = 0; k < in; ++k) prev_delta[k] += wrow[k] * delta[o];
        }
        for (std::size_t k = 0; k < in; ++k) prev_delta[k] *= 1.0 - a_prev[k] * a_prev[k];
        delta.swap(prev_delta);
      }
    }
  }
  const double scale = 1.0 / static_cast<double>(batch.rows.size());
  out.loss *= scale;
  for (double& g : out.grad) g *= scale;
  if (!std::isfinite(out.loss)) throw NumericError("non-finite loss in forward pass");
  for (double g : out.grad)
    if (!std::isfinite(g)) throw NumericError("non-finite gradient in backward pass");
  return out;
}

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};

/// Accuracy and mean cross-entropy of one model over a whole dataset.
inline Evaluation evaluate(const ModelSpec& model, std::span<const double> params, const Dataset& ds) {
  if (ds.samples() == 0) throw NumericError("evaluation set is empty");
  if (params.size() != model.param_count()) throw NumericError("parameter count mismatch");
  const std::size_t layers = model.layer_dims.size() - 1;
  std::vector<std::vector<double>> acts;
  Evaluation ev;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < ds.samples(); ++r) {
    detail::forward_sample(model, params, ds.row(r), acts);
    auto& logits = acts[layers];
    const auto argmax = static_cast<std::size_t>(
        std::distance(logits.begin(), std::max_element(logits.begin(), logits.end())));
    if (argmax == static_cast<std::size_t>(ds.labels[r])) ++correct;
    ev.loss += detail::softmax_xent(logits, ds.labels[r]);
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(ds.samples());
  ev.loss /= static_cast<double>(ds.samples());
  if (!std::isfinite(ev.loss)) throw NumericError("non-finite evaluation loss");
  return ev;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

enum class DatasetFormat { csv, idx };

/// CSV rows of numeric features with the integer class label last.
inline Dataset load_csv(const std::string& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && has_header) continue;
    if (line.empty()) continue;
    std::vector<double> fields;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::logic_error&) {
        used = 0;
      }
      while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
      if (cell.empty() || used != cell.size()) {
        throw ParseError(path + ", line " + std::to_string(line_no) + ": malformed field `" + cell + "`");
      }
      fields.push_back(v);
    }
    if (fields.size() < 2) {
      throw ParseError(path + ", line " + std::to_string(line_no) + ": need at least one feature and a label");
    }
    const std::size_t dim = fields.size() - 1;
    if (ds.input_dim == 0) ds.input_dim = dim;
    if (dim != ds.input_dim) {
      throw ParseError(path + ", line " + std::to_string(line_no) + ": expected " +
                       std::to_string(ds.input_dim + 1) + " columns, found " +
                       std::to_string(fields.size()));
    }
    const double label = fields.back();
    if (label < 0 || label != std::floor(label)) {
      throw ParseError(path + ", line " + std::to_string(line_no) + ": label must be a non-negative integer");
    }
    ds.features.insert(ds.features.end(), fields.begin(), fields.end() - 1);
    ds.labels.push_back(static_cast<int>(label));
    max_label = std::max(max_label, static_cast<int>(label));
  }
  if (ds.labels.empty()) throw ParseError(path + ": no data rows");
  ds.num_classes = static_cast<std::size_t>(max_label + 1);
  return ds;
}

/// Unsigned-byte IDX tensor (big-endian header, type code 0x08).
struct IdxTensor {
  std::vector<std::size_t> dims;
  std::vector<std::uint8_t> data;
};

inline IdxTensor read_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto be32 = [&bytes](std::size_t off) {
    return (std::uint32_t{bytes[off]} << 24) | (std::uint32_t{bytes[off + 1]} << 16) |
           (std::uint32_t{bytes[off + 2]} << 8) | std::uint32_t{bytes[off + 3]};
  };
  if (bytes.size() < 4) {
    throw ParseError(path + ": truncated header, expected 4 bytes at offset 0, found " +
                     std::to_string(bytes.size()));
  }
  if (bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08 || bytes[3] == 0) {
    std::ostringstream os;
    os << path << ": bad IDX magic 0x" << std::hex << be32(0) << " at offset 0";
    throw ParseError(os.str());
  }
  const std::size_t ndims = bytes[3];
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() < header) {
    throw ParseError(path + ": truncated header, expected " + std::to_string(header) +
                     " bytes, found " + std::to_string(bytes.size()));
  }
  IdxTensor t;
  std::size_t count = 1;
  for (std::size_t k = 0; k < ndims; ++k) {
    t.dims.push_back(be32(4 + 4 * k));
    count *= t.dims.back();
  }
  if (bytes.size() - header != count) {
    throw ParseError(path + ": expected " + std::to_string(count) + " data bytes after offset " +
                     std::to_string(header) + ", found " + std::to_string(bytes.size() - header));
  }
  t.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return t;
}

/// Loads a dataset. For IDX, `path` is the image file and `idx_labels_path`
/// the matching label file; pixels are scaled to [0,1].
inline Dataset load_dataset(const std::string& path, DatasetFormat format, bool csv_header = false,
                            const std::string& idx_labels_path = {}) {
  if (format == DatasetFormat::csv) return load_csv(path, csv_header);
  const IdxTensor images = read_idx(path);
  if (images.dims.empty()) throw ParseError(path + ": IDX image file has no dimensions");
  Dataset ds;
  const std::size_t samples = images.dims[0];
  ds.input_dim = samples == 0 ? 0 : images.data.size() / samples;
  ds.features.reserve(images.data.size());
  for (auto b : images.data) ds.features.push_back(static_cast<double>(b) / 255.0);
  if (idx_labels_path.empty()) throw ParseError("IDX dataset needs a label file");
  const IdxTensor labels = read_idx(idx_labels_path);
  if (labels.dims.size() != 1 || labels.dims[0] != samples) {
    throw ParseError(idx_labels_path + ": label count does not match " + std::to_string(samples) +
                     " images");
  }
  int max_label = 0;
  for (auto b : labels.data) {
    ds.labels.push_back(b);
    max_label = std::max<int>(max_label, b);
  }
  ds.num_classes = static_cast<std::size_t>(max_label + 1);
  return ds;
}

}  // namespace adagossip

#endif  // ADAGOSSIP_MODELS_DATA_HPP_
