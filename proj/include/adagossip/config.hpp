#ifndef ADAGOSSIP_CONFIG_HPP_
#define ADAGOSSIP_CONFIG_HPP_

#include <algorithm>
#include <array>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "adagossip/compression.hpp"
#include "adagossip/consensus.hpp"
#include "adagossip/errors.hpp"
#include "adagossip/learning.hpp"
#include "adagossip/models_data.hpp"
#include "adagossip/topology.hpp"

namespace adagossip {

enum class ExperimentAlgorithm { dsgd, deepsqueeze, choco, adag, gossip_only_choco, gossip_only_adag };

inline std::string_view to_string(ExperimentAlgorithm a) {
  switch (a) {
    case ExperimentAlgorithm::dsgd: return "dsgd";
    case ExperimentAlgorithm::deepsqueeze: return "deepsqueeze";
    case ExperimentAlgorithm::choco: return "choco";
    case ExperimentAlgorithm::adag: return "adag";
    case ExperimentAlgorithm::gossip_only_choco: return "gossip_only_choco";
    case ExperimentAlgorithm::gossip_only_adag: return "gossip_only_adag";
  }
  return "?";
}

inline bool is_gossip_only(ExperimentAlgorithm a) {
  return a == ExperimentAlgorithm::gossip_only_choco || a == ExperimentAlgorithm::gossip_only_adag;
}

inline Algorithm training_algorithm(ExperimentAlgorithm a) {
  switch (a) {
    case ExperimentAlgorithm::dsgd: return Algorithm::dsgd;
    case ExperimentAlgorithm::deepsqueeze: return Algorithm::deepsqueeze;
    case ExperimentAlgorithm::choco: return Algorithm::choco;
    case ExperimentAlgorithm::adag: return Algorithm::adag;
    default: throw ConfigError(std::string(to_string(a)) + " is not a training algorithm");
  }
}

/// Desk-scale learning task. Blobs are generated from `data_seed` so every
/// experiment seed sees the same dataset.
struct TaskConfig {
  ModelKind model = ModelKind::mlp;
  std::vector<std::size_t> hidden{32};
  std::size_t input_dim = 16;
  std::size_t classes = 4;
  std::size_t train_samples = 8000;
  std::size_t test_samples = 2000;
  double separation = 1.5;
  std::uint64_t data_seed = 7;
  // Optional file-backed data; empty means synthetic blobs.
  std::string data_format = "csv";
  bool csv_header = false;
  std::string train_data, train_labels, test_data, test_labels;
  // gossip_only_* runs average `dim`-dimensional standard normal vectors.
  std::size_t dim = 1000;
  std::size_t rounds = 2000;

  ModelSpec model_spec(std::size_t in, std::size_t out) const {
    if (model == ModelKind::logreg) return ModelSpec::logreg(in, out);
    std::vector<std::size_t> dims{in};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(out);
    return ModelSpec::mlp(dims);
  }
};

struct ExperimentConfig {
  ExperimentAlgorithm algorithm = ExperimentAlgorithm::adag;
  std::string topology = "ring";
  std::size_t agents = 16;
  CompressorSpec compressor;
  GossipHyperParams gossip{1.0, 0.999, 1e-8};
  OptimizerConfig optimizer{0.1, 0.9, true, 1e-4, 32, 20};
  TaskConfig task;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string out;
  std::string preset;
  std::size_t jobs = 1;
  bool timing = false;  // when false wall_seconds is written as 0
};

using ConfigMap = std::map<std::string, std::string>;

namespace detail {

/// Shortest text that parses back to the same double.
inline std::string format_real(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "preset",      "algorithm",   "topology",      "agents",       "compressor",  "gamma",
      "beta",        "epsilon",     "lr",            "momentum",     "nesterov",    "weight_decay",
      "epochs",      "batch",       "seeds",         "out",          "jobs",        "timing",
      "model",       "hidden",      "input_dim",     "classes",      "train_samples",
      "test_samples", "separation", "data_seed",     "data_format",  "csv_header",  "train_data",
      "train_labels", "test_data",  "test_labels",   "dim",          "rounds"};
  return keys;
}

/// Flat `key = value` lines; `#` starts a comment line.
inline ConfigMap parse_key_values(std::string_view text, const std::string& source = "config") {
  ConfigMap out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string{};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& keys = config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": unknown key `" + key + "`");
    }
    out[key] = value;
  }
  return out;
}

/// Recovers the resolved config recorded as `# key=value` comments at the
/// top of a metrics CSV.
inline ConfigMap config_from_metrics_header(std::string_view text, const std::string& source = "metrics") {
  std::istringstream in{std::string(text)};
  std::string line, body;
  std::getline(in, line);  // schema line
  while (std::getline(in, line) && line.starts_with("# ")) body += line.substr(2) + '\n';
  return parse_key_values(body, source);
}

/// Reads a key=value config file, or the header of a metrics CSV for replay.
inline ConfigMap read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (text.starts_with("# adagossip-metrics")) return config_from_metrics_header(text, path);
  return parse_key_values(text, path);
}

// ---------------------------------------------------------------------------
// Presets: tuned consensus step-sizes for the published CIFAR-10 / CIFAR-100 /
// Fashion-MNIST / Imagenette / ImageNet setups, applied to the desk-scale task.
// ---------------------------------------------------------------------------

struct Preset {
  std::string name;
  std::string_view algorithm;
  std::string_view topology;
  std::size_t agents;
  std::string_view compressor;
  double gamma;
  double lr;
  std::size_t epochs;
};

inline const std::vector<Preset>& presets() {
  static const std::vector<Preset> table = [] {
    std::vector<Preset> t;
    struct Cell {
      std::string_view dataset, graph;
      std::size_t agents;
      std::string_view topology, comp_tag, compressor;
      double deepsqueeze, choco, adag;  // 0 = not reported
      double lr;
      std::size_t epochs;
    };
    static constexpr std::array<Cell, 27> cells{{
        // CIFAR-10, ring 16
        {"cifar10", "ring16", 16, "ring", "topk90", "topk:0.9", 0.05, 0.2, 0.01, 0.1, 200},
        {"cifar10", "ring16", 16, "ring", "topk99", "topk:0.99", 0.01, 0.0375, 0.001, 0.1, 200},
        {"cifar10", "ring16", 16, "ring", "quant8", "quant:8", 0.1, 0.7, 0.008, 0.1, 200},
        {"cifar10", "ring16", 16, "ring", "quant4", "quant:4", 0.02, 0.1, 0.002, 0.1, 200},
        {"cifar10", "ring16", 16, "ring", "quant2", "quant:2", 0.01, 0.025, 0.0008, 0.1, 200},
        // CIFAR-10, ring 32
        {"cifar10", "ring32", 32, "ring", "topk90", "topk:0.9", 0.1, 0.2, 0.004, 0.1, 200},
        {"cifar10", "ring32", 32, "ring", "topk99", "topk:0.99", 0.02, 0.05, 0.0008, 0.1, 200},
        {"cifar10", "ring32", 32, "ring", "quant8", "quant:8", 0.1, 0.8, 0.02, 0.1, 200},
        {"cifar10", "ring32", 32, "ring", "quant4", "quant:4", 0.08, 0.1, 0.002, 0.1, 200},
        {"cifar10", "ring32", 32, "ring", "quant2", "quant:2", 0.03, 0.025, 0.0008, 0.1, 200},
        // CIFAR-10, Dyck and torus with 32 agents
        {"cifar10", "dyck32", 32, "dyck32", "topk90", "topk:0.9", 0, 0.15, 0.004, 0.1, 200},
        {"cifar10", "dyck32", 32, "dyck32", "topk99", "topk:0.99", 0, 0.03, 0.0008, 0.1, 200},
        {"cifar10", "torus32", 32, "torus:4x8", "topk90", "topk:0.9", 0, 0.15, 0.004, 0.1, 200},
        {"cifar10", "torus32", 32, "torus:4x8", "topk99", "topk:0.99", 0, 0.03, 0.001, 0.1, 200},
        // Other datasets, ring 16
        {"fmnist", "ring16", 16, "ring", "topk90", "topk:0.9", 0, 0.1, 0.002, 0.01, 100},
        {"fmnist", "ring16", 16, "ring", "topk99", "topk:0.99", 0, 0.01, 0.001, 0.01, 100},
        {"cifar100", "ring16", 16, "ring", "topk90", "topk:0.9", 0, 0.2, 0.01, 0.1, 100},
        {"cifar100", "ring16", 16, "ring", "topk99", "topk:0.99", 0, 0.04, 0.001, 0.1, 100},
        {"imagenette", "ring16", 16, "ring", "topk90", "topk:0.9", 0, 0.1, 0.005, 0.01, 100},
        {"imagenette", "ring16", 16, "ring", "topk99", "topk:0.99", 0, 0.06, 0.0003, 0.01, 100},
        {"imagenet", "ring16", 16, "ring", "topk90", "topk:0.9", 0, 0.3, 0.001, 0.1, 50},
        {"imagenet", "ring16", 16, "ring", "topk99", "topk:0.99", 0, 0.03, 0.0001, 0.1, 50},
        // Full-communication baselines (gamma = 1)
        {"cifar10", "ring16", 16, "ring", "full", "none", 0, 0, 0, 0.1, 200},
        {"cifar10", "ring32", 32, "ring", "full", "none", 0, 0, 0, 0.1, 200},
        {"cifar10", "dyck32", 32, "dyck32", "full", "none", 0, 0, 0, 0.1, 200},
        {"cifar10", "torus32", 32, "torus:4x8", "full", "none", 0, 0, 0, 0.1, 200},
        {"imagenet", "ring16", 16, "ring", "full", "none", 0, 0, 0, 0.1, 50},
    }};
    for (const auto& c : cells) {
      auto add = [&](std::string_view alg, double gamma) {
        std::string name = "paper/" + std::string(c.dataset) + "-" + std::string(c.graph) + "-" +
                           std::string(c.comp_tag) + "-" + std::string(alg);
        t.push_back({std::move(name), alg, c.topology, c.agents, c.compressor, gamma, c.lr, c.epochs});
      };
      if (c.comp_tag == "full") {
        add("dsgd", 1.0);
        continue;
      }
      if (c.deepsqueeze > 0) add("deepsqueeze", c.deepsqueeze);
      add("choco", c.choco);
      add("adag", c.adag);
    }
    return t;
  }();
  return table;
}

inline std::optional<Preset> find_preset(std::string_view name) {
  for (const auto& p : presets())
    if (p.name == name) return p;
  return std::nullopt;
}

inline ConfigMap preset_values(std::string_view name) {
  const auto p = find_preset(name);
  if (!p) throw ConfigError("unknown preset `" + std::string(name) + "`");
  return {{"algorithm", std::string(p->algorithm)},
          {"topology", std::string(p->topology)},
          {"agents", std::to_string(p->agents)},
          {"compressor", std::string(p->compressor)},
          {"gamma", detail::format_real(p->gamma)},
          {"beta", "0.999"},
          {"lr", detail::format_real(p->lr)},
          {"epochs", std::to_string(p->epochs)},
          {"momentum", "0.9"},
          {"nesterov", "true"},
          {"weight_decay", "0.0001"},
          {"batch", "32"}};
}

namespace detail {

inline double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (v.empty() || used != v.size()) throw ConfigError("`" + key + "` expects a number, got `" + v + "`");
  return out;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    out = std::stoull(v, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (v.empty() || used != v.size()) {
    throw ConfigError("`" + key + "` expects a non-negative integer, got `" + v + "`");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("`" + key + "` expects true/false, got `" + v + "`");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline ExperimentAlgorithm parse_algorithm(const std::string& v) {
  for (auto a : {ExperimentAlgorithm::dsgd, ExperimentAlgorithm::deepsqueeze, ExperimentAlgorithm::choco,
                 ExperimentAlgorithm::adag, ExperimentAlgorithm::gossip_only_choco,
                 ExperimentAlgorithm::gossip_only_adag}) {
    if (v == to_string(a)) return a;
  }
  throw ConfigError("unknown algorithm `" + v +
                    "` (expected dsgd, deepsqueeze, choco, adag, gossip_only_choco, gossip_only_adag)");
}

}  // namespace detail

/// Resolves defaults <- preset <- file <- overrides into a validated config.
inline ExperimentConfig resolve_config(const ConfigMap& file, const ConfigMap& overrides = {}) {
  const auto& keys = config_keys();
  for (const auto* m : {&file, &overrides}) {
    for (const auto& [k, v] : *m) {
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
        throw ConfigError("unknown key `" + k + "`");
      }
    }
  }
  ConfigMap merged;
  std::string preset;
  if (auto it = file.find("preset"); it != file.end()) preset = it->second;
  if (auto it = overrides.find("preset"); it != overrides.end()) preset = it->second;
  if (!preset.empty()) merged = preset_values(preset);
  for (const auto& [k, v] : file) merged[k] = v;
  for (const auto& [k, v] : overrides) merged[k] = v;

  ExperimentConfig cfg;
  cfg.preset = preset;
  bool gamma_given = false;
  for (const auto& [k, v] : merged) {
    if (k == "preset") continue;
    if (k == "algorithm") cfg.algorithm = detail::parse_algorithm(v);
    else if (k == "topology") cfg.topology = v;
    else if (k == "agents") cfg.agents = detail::parse_uint(k, v);
    else if (k == "compressor") {
      try {
        cfg.compressor = parse_compressor(v);
      } catch (const CompressionError& e) {
        throw ConfigError(e.what());
      }
    } else if (k == "gamma") {
      cfg.gossip.gamma = detail::parse_real(k, v);
      gamma_given = true;
    } else if (k == "beta") cfg.gossip.beta = detail::parse_real(k, v);
    else if (k == "epsilon") cfg.gossip.epsilon = detail::parse_real(k, v);
    else if (k == "lr") cfg.optimizer.lr0 = detail::parse_real(k, v);
    else if (k == "momentum") cfg.optimizer.momentum = detail::parse_real(k, v);
    else if (k == "nesterov") cfg.optimizer.nesterov = detail::parse_bool(k, v);
    else if (k == "weight_decay") cfg.optimizer.weight_decay = detail::parse_real(k, v);
    else if (k == "epochs") cfg.optimizer.epochs = detail::parse_uint(k, v);
    else if (k == "batch") cfg.optimizer.batch_size = detail::parse_uint(k, v);
    else if (k == "seeds") {
      cfg.seeds.clear();
      for (const auto& s : detail::split_list(v)) cfg.seeds.push_back(detail::parse_uint(k, s));
    } else if (k == "out") cfg.out = v;
    else if (k == "jobs") cfg.jobs = detail::parse_uint(k, v);
    else if (k == "timing") cfg.timing = detail::parse_bool(k, v);
    else if (k == "model") {
      if (v == "mlp") cfg.task.model = ModelKind::mlp;
      else if (v == "logreg") cfg.task.model = ModelKind::logreg;
      else throw ConfigError("unknown model `" + v + "` (expected mlp or logreg)");
    } else if (k == "hidden") {
      cfg.task.hidden.clear();
      for (const auto& s : detail::split_list(v)) cfg.task.hidden.push_back(detail::parse_uint(k, s));
    } else if (k == "input_dim") cfg.task.input_dim = detail::parse_uint(k, v);
    else if (k == "classes") cfg.task.classes = detail::parse_uint(k, v);
    else if (k == "train_samples") cfg.task.train_samples = detail::parse_uint(k, v);
    else if (k == "test_samples") cfg.task.test_samples = detail::parse_uint(k, v);
    else if (k == "separation") cfg.task.separation = detail::parse_real(k, v);
    else if (k == "data_seed") cfg.task.data_seed = detail::parse_uint(k, v);
    else if (k == "data_format") cfg.task.data_format = v;
    else if (k == "csv_header") cfg.task.csv_header = detail::parse_bool(k, v);
    else if (k == "train_data") cfg.task.train_data = v;
    else if (k == "train_labels") cfg.task.train_labels = v;
    else if (k == "test_data") cfg.task.test_data = v;
    else if (k == "test_labels") cfg.task.test_labels = v;
    else if (k == "dim") cfg.task.dim = detail::parse_uint(k, v);
    else if (k == "rounds") cfg.task.rounds = detail::parse_uint(k, v);
  }

  // Cross-field validation.
  const auto alg = cfg.algorithm;
  if (alg == ExperimentAlgorithm::dsgd) {
    if (cfg.compressor.kind != CompressorKind::identity) {
      throw ConfigError("dsgd is full-communication and cannot use compressor `" +
                        to_string(cfg.compressor) + "`; use deepsqueeze, choco or adag");
    }
    if (!gamma_given) cfg.gossip.gamma = 1.0;
  } else if (!gamma_given) {
    throw ConfigError("gamma is required for " + std::string(to_string(alg)) +
                      ": the consensus step-size must be tuned for the compressor (see `sweep --axis gamma`)");
  }
  try {
    cfg.gossip.validate();
    if (!is_gossip_only(alg)) cfg.optimizer.validate();
    (void)make_topology(cfg.topology, cfg.agents);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (cfg.seeds.empty()) throw ConfigError("at least one seed is required");
  if (cfg.jobs < 1) throw ConfigError("jobs must be >= 1");
  if (is_gossip_only(alg) && (cfg.task.dim < 1 || cfg.task.rounds < 1)) {
    throw ConfigError("gossip-only runs need dim >= 1 and rounds >= 1");
  }
  if (cfg.task.data_format != "csv" && cfg.task.data_format != "idx") {
    throw ConfigError("data_format must be csv or idx");
  }
  if (cfg.task.train_data.empty() != cfg.task.test_data.empty()) {
    throw ConfigError("train_data and test_data must be given together");
  }
  if (cfg.task.model == ModelKind::mlp && cfg.task.hidden.empty()) {
    throw ConfigError("mlp needs at least one hidden layer width");
  }
  return cfg;
}

/// Reads an optional config file and applies command-line overrides.
inline ExperimentConfig parse_config(const std::optional<std::string>& path, const ConfigMap& overrides) {
  return resolve_config(path ? read_config_file(*path) : ConfigMap{}, overrides);
}

/// Every key of the resolved config, for recording next to results.
inline ConfigMap to_key_values(const ExperimentConfig& cfg) {
  auto join = [](const auto& xs) {
    std::string out;
    for (const auto& x : xs) out += (out.empty() ? "" : ",") + std::to_string(x);
    return out;
  };
  ConfigMap m;
  m["algorithm"] = std::string(to_string(cfg.algorithm));
  m["topology"] = cfg.topology;
  m["agents"] = std::to_string(cfg.agents);
  m["compressor"] = to_string(cfg.compressor);
  m["gamma"] = detail::format_real(cfg.gossip.gamma);
  m["beta"] = detail::format_real(cfg.gossip.beta);
  m["epsilon"] = detail::format_real(cfg.gossip.epsilon);
  m["lr"] = detail::format_real(cfg.optimizer.lr0);
  m["momentum"] = detail::format_real(cfg.optimizer.momentum);
  m["nesterov"] = cfg.optimizer.nesterov ? "true" : "false";
  m["weight_decay"] = detail::format_real(cfg.optimizer.weight_decay);
  m["epochs"] = std::to_string(cfg.optimizer.epochs);
  m["batch"] = std::to_string(cfg.optimizer.batch_size);
  m["seeds"] = join(cfg.seeds);
  if (!cfg.out.empty()) m["out"] = cfg.out;
  m["jobs"] = std::to_string(cfg.jobs);
  m["timing"] = cfg.timing ? "true" : "false";
  m["model"] = cfg.task.model == ModelKind::mlp ? "mlp" : "logreg";
  m["hidden"] = join(cfg.task.hidden);
  m["input_dim"] = std::to_string(cfg.task.input_dim);
  m["classes"] = std::to_string(cfg.task.classes);
  m["train_samples"] = std::to_string(cfg.task.train_samples);
  m["test_samples"] = std::to_string(cfg.task.test_samples);
  m["separation"] = detail::format_real(cfg.task.separation);
  m["data_seed"] = std::to_string(cfg.task.data_seed);
  m["data_format"] = cfg.task.data_format;
  m["csv_header"] = cfg.task.csv_header ? "true" : "false";
  for (auto [key, value] : {std::pair{"train_data", &cfg.task.train_data},
                            std::pair{"train_labels", &cfg.task.train_labels},
                            std::pair{"test_data", &cfg.task.test_data},
                            std::pair{"test_labels", &cfg.task.test_labels}}) {
    if (!value->empty()) m[key] = *value;
  }
  m["dim"] = std::to_string(cfg.task.dim);
  m["rounds"] = std::to_string(cfg.task.rounds);
  return m;
}

}  // namespace adagossip

#endif  // ADAGOSSIP_CONFIG_HPP_
