#ifndef ADAGOSSIP_EXPERIMENT_HPP_
#define ADAGOSSIP_EXPERIMENT_HPP_

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "adagossip/compression.hpp"
#include "adagossip/config.hpp"
#include "adagossip/consensus.hpp"
#include "adagossip/errors.hpp"
#include "adagossip/learning.hpp"
#include "adagossip/models_data.hpp"
#include "adagossip/rng.hpp"
#include "adagossip/topology.hpp"

namespace adagossip {

// ---------------------------------------------------------------------------
// Byte accounting
// ---------------------------------------------------------------------------

/// Training iterations per epoch: floor(samples / (batch * agents)).
inline std::uint64_t iterations_per_epoch(std::uint64_t samples, std::uint64_t agents,
                                          std::uint64_t batch) {
  return samples / (batch * agents);
}

/// Bytes one agent sends per epoch.
inline std::uint64_t predicted_bytes_per_epoch_exact(std::size_t params, std::uint64_t samples,
                                                     std::uint64_t agents, std::uint64_t batch,
                                                     std::size_t out_degree,
                                                     const CompressorSpec& compressor) {
  return iterations_per_epoch(samples, agents, batch) * out_degree * payload_bytes(compressor, params);
}

/// Megabytes (1e6 bytes) one agent sends per epoch.
inline double predicted_bytes_per_epoch(std::size_t params, std::uint64_t samples, std::uint64_t agents,
                                        std::uint64_t batch, std::size_t out_degree,
                                        const CompressorSpec& compressor) {
  return static_cast<double>(
             predicted_bytes_per_epoch_exact(params, samples, agents, batch, out_degree, compressor)) /
         1e6;
}

inline double predicted_bytes_per_epoch(std::size_t params, std::uint64_t samples, std::uint64_t agents,
                                        std::uint64_t batch, std::string_view topology,
                                        const CompressorSpec& compressor) {
  const auto w = make_topology(topology, agents);
  return predicted_bytes_per_epoch(params, samples, agents, batch, w.out_degree(0), compressor);
}

/// Per-agent cumulative bytes and per-epoch increments.
class BytesLedger {
 public:
  explicit BytesLedger(std::size_t agents) : cumulative_(agents, 0), epoch_start_(agents, 0) {}

  void record_round(std::span<const std::uint64_t> bytes) {
    if (bytes.size() != cumulative_.size()) throw NumericError("ledger agent count mismatch");
    for (std::size_t i = 0; i < bytes.size(); ++i) cumulative_[i] += bytes[i];
  }

  /// Closes the current epoch and returns its per-agent increments.
  std::vector<std::uint64_t> close_epoch() {
    std::vector<std::uint64_t> inc(cumulative_.size());
    for (std::size_t i = 0; i < inc.size(); ++i) inc[i] = cumulative_[i] - epoch_start_[i];
    epoch_start_ = cumulative_;
    increments_.push_back(inc);
    return inc;
  }

  std::uint64_t cumulative(std::size_t agent) const { return cumulative_.at(agent); }
  const std::vector<std::uint64_t>& cumulative() const { return cumulative_; }
  const std::vector<std::vector<std::uint64_t>>& epoch_increments() const { return increments_; }

  /// Mean over agents of the cumulative bytes.
  double mean_cumulative() const {
    std::uint64_t total = 0;
    for (auto b : cumulative_) total += b;
    return static_cast<double>(total) / static_cast<double>(cumulative_.size());
  }

 private:
  std::vector<std::uint64_t> cumulative_;
  std::vector<std::uint64_t> epoch_start_;
  std::vector<std::vector<std::uint64_t>> increments_;
};

// ---------------------------------------------------------------------------
// Records and CSV
// ---------------------------------------------------------------------------

struct MetricsRecord {
  std::string run_id;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;  // 1-based epoch (gossip-only: round)
  double lr = 0.0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  double consensus_distance = 0.0;
  double mb_transmitted_cumulative = 0.0;  // per agent
  double wall_seconds = 0.0;

  bool operator==(const MetricsRecord&) const = default;
};

inline constexpr std::string_view kMetricsSchema = "# adagossip-metrics v1";
inline constexpr std::string_view kMetricsColumns =
    "run_id,seed,epoch,lr,train_loss,test_accuracy,consensus_distance,mb_transmitted_cumulative,"
    "wall_seconds";

inline std::string format_double(double v) { return detail::format_real(v); }

inline void write_metrics_row(std::ostream& os, const MetricsRecord& r) {
  os << r.run_id << ',' << r.seed << ',' << r.epoch << ',' << format_double(r.lr) << ','
     << format_double(r.train_loss) << ',' << format_double(r.test_accuracy) << ','
     << format_double(r.consensus_distance) << ',' << format_double(r.mb_transmitted_cumulative) << ','
     << format_double(r.wall_seconds) << '\n';
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::vector<MetricsRecord> records;
  std::vector<std::vector<std::uint64_t>> epoch_bytes;  // [epoch][agent]
  std::string error;  // empty on success
  bool ok() const { return error.empty(); }
};

struct ExperimentSummary {
  std::string metric;  // test_accuracy, or consensus_distance for gossip-only runs
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
  std::size_t seeds_ok = 0;
  std::size_t seeds_failed = 0;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::string run_id;
  std::vector<SeedOutcome> seeds;
  ExperimentSummary summary;
};

inline std::string make_run_id(const ExperimentConfig& cfg) {
  std::string topo = cfg.topology;
  std::replace(topo.begin(), topo.end(), ':', '-');
  std::string comp = to_string(cfg.compressor);
  std::replace(comp.begin(), comp.end(), ':', '-');
  return std::string(to_string(cfg.algorithm)) + "_" + topo + "_n" + std::to_string(cfg.agents) + "_" +
         comp + "_g" + format_double(cfg.gossip.gamma) + "_b" + format_double(cfg.gossip.beta);
}

/// Writes the schema line, the resolved config as comments, the column
/// header and every row in seed order.
inline void write_metrics_csv(std::ostream& os, const ExperimentResult& result) {
  os << kMetricsSchema << '\n';
  for (const auto& [k, v] : to_key_values(result.config)) {
    if (k == "out" || k == "jobs") continue;  // do not affect the metrics
    os << "# " << k << '=' << v << '\n';
  }
  os << kMetricsColumns << '\n';
  for (const auto& s : result.seeds)
    for (const auto& r : s.records) write_metrics_row(os, r);
}

inline void write_summary(std::ostream& os, const ExperimentResult& result) {
  os << "run_id,metric,mean,std,seeds_ok,seeds_failed\n";
  os << result.run_id << ',' << result.summary.metric << ',' << format_double(result.summary.mean) << ','
     << format_double(result.summary.stddev) << ',' << result.summary.seeds_ok << ','
     << result.summary.seeds_failed << '\n';
  for (const auto& s : result.seeds)
    if (!s.ok()) os << "# seed " << s.seed << " failed: " << s.error << '\n';
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

struct TaskData {
  Dataset train;
  Dataset test;
  ModelSpec model;
};

inline TaskData load_task(const TaskConfig& task) {
  TaskData data;
  if (!task.train_data.empty()) {
    const auto fmt = task.data_format == "idx" ? DatasetFormat::idx : DatasetFormat::csv;
    data.train = load_dataset(task.train_data, fmt, task.csv_header, task.train_labels);
    data.test = load_dataset(task.test_data, fmt, task.csv_header, task.test_labels);
    if (data.test.input_dim != data.train.input_dim) throw ParseError("train/test feature widths differ");
    data.train.num_classes = data.test.num_classes = std::max(data.train.num_classes, data.test.num_classes);
  } else {
    // Train and test are drawn from one generator call so they share the distribution.
    const auto all = generate_synthetic_classification(task.data_seed, task.train_samples + task.test_samples,
                                                       task.input_dim, task.classes, task.separation);
    std::vector<std::size_t> train_rows(task.train_samples), test_rows(task.test_samples);
    for (std::size_t i = 0; i < task.train_samples; ++i) train_rows[i] = i;
    for (std::size_t i = 0; i < task.test_samples; ++i) test_rows[i] = task.train_samples + i;
    data.train = subset(all, train_rows);
    data.test = subset(all, test_rows);
  }
  data.model = task.model_spec(data.train.input_dim, std::max<std::size_t>(data.train.num_classes, 2));
  data.model.validate();
  return data;
}

namespace detail {

inline double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline SeedOutcome run_training_seed(const ExperimentConfig& cfg, const TaskData& data, std::uint64_t seed,
                                     const std::string& run_id) {
  SeedOutcome out;
  out.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  try {
    const auto w = make_topology(cfg.topology, cfg.agents);
    const std::size_t n = cfg.agents;
    const auto partition = partition_iid(data.train, n, derive_seed(seed, 0, "partition"));
    Rng init_rng = make_rng(seed, 0, "init");
    const auto x0 = init_params(data.model, init_rng);
    auto states = make_learner_states(x0, w);
    const std::size_t batch = cfg.optimizer.batch_size;
    const std::size_t iters = partition.shards[0].size() / batch;
    if (iters == 0) throw ConfigError("shard smaller than one batch; reduce batch or agents");
    std::vector<Rng> batch_rngs;
    for (std::size_t i = 0; i < n; ++i) batch_rngs.push_back(make_rng(seed, i, "batches"));
    std::vector<std::vector<std::size_t>> order(n);
    BytesLedger ledger(n);
    const Algorithm alg = training_algorithm(cfg.algorithm);

    for (std::size_t epoch = 0; epoch < cfg.optimizer.epochs; ++epoch) {
      const double lr = lr_schedule(cfg.optimizer, epoch);
      for (std::size_t i = 0; i < n; ++i) {
        order[i] = partition.shards[i];
        std::shuffle(order[i].begin(), order[i].end(), batch_rngs[i]);
      }
      double loss_sum = 0.0;
      for (std::size_t it = 0; it < iters; ++it) {
        auto grad_fn = [&](std::size_t agent, std::span<const double> x) {
          const std::span<const std::size_t> rows(order[agent].data() + it * batch, batch);
          auto fb = forward_backward(data.model, x, Batch{data.train, rows});
          loss_sum += fb.loss;
          return std::move(fb.grad);
        };
        const auto bytes = training_round(alg, states, w, cfg.compressor, cfg.gossip, grad_fn, lr, cfg.optimizer);
        ledger.record_round(bytes);
      }
      out.epoch_bytes.push_back(ledger.close_epoch());
      const auto eval = evaluate_consensus_model(states, data.model, data.test);
      const auto xs = parameters_of(states);
      MetricsRecord r;
      r.run_id = run_id;
      r.seed = seed;
      r.epoch = epoch + 1;
      r.lr = lr;
      r.train_loss = loss_sum / static_cast<double>(iters * n);
      r.test_accuracy = eval.accuracy;
      r.consensus_distance = consensus_distance(std::span<const std::vector<double>>(xs));
      r.mb_transmitted_cumulative = ledger.mean_cumulative() / 1e6;
      r.wall_seconds = cfg.timing ? elapsed_seconds(start) : 0.0;
      out.records.push_back(std::move(r));
    }
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

inline SeedOutcome run_gossip_seed(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& run_id) {
  SeedOutcome out;
  out.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  try {
    const auto w = make_topology(cfg.topology, cfg.agents);
    std::vector<std::vector<double>> initial(cfg.agents, std::vector<double>(cfg.task.dim));
    for (std::size_t i = 0; i < cfg.agents; ++i) {
      Rng rng = make_rng(seed, i, "gossip-init");
      std::normal_distribution<double> normal(0.0, 1.0);
      for (double& v : initial[i]) v = normal(rng);
    }
    const auto engine = cfg.algorithm == ExperimentAlgorithm::gossip_only_adag ? ConsensusEngine::adagossip
                                                                               : ConsensusEngine::choco;
    const auto series = run_consensus(initial, w, cfg.compressor, engine, cfg.gossip, cfg.task.rounds);
    for (const auto& s : series) {
      if (s.round == 0) continue;
      MetricsRecord r;
      r.run_id = run_id;
      r.seed = seed;
      r.epoch = s.round;
      r.consensus_distance = s.distance;
      r.mb_transmitted_cumulative = static_cast<double>(s.cumulative_bytes) / static_cast<double>(cfg.agents) / 1e6;
      out.records.push_back(std::move(r));
    }
    if (cfg.timing && !out.records.empty()) out.records.back().wall_seconds = elapsed_seconds(start);
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

inline ExperimentSummary summarize(const ExperimentConfig& cfg, const std::vector<SeedOutcome>& seeds) {
  ExperimentSummary s;
  s.metric = is_gossip_only(cfg.algorithm) ? "consensus_distance" : "test_accuracy";
  std::vector<double> finals;
  for (const auto& o : seeds) {
    if (!o.ok() || o.records.empty()) {
      ++s.seeds_failed;
      continue;
    }
    ++s.seeds_ok;
    const auto& last = o.records.back();
    finals.push_back(is_gossip_only(cfg.algorithm) ? last.consensus_distance : last.test_accuracy);
  }
  if (finals.empty()) {
    s.mean = std::nan("");
    s.stddev = std::nan("");
    return s;
  }
  double sum = 0.0;
  for (double v : finals) sum += v;
  s.mean = sum / static_cast<double>(finals.size());
  double ss = 0.0;
  for (double v : finals) ss += (v - s.mean) * (v - s.mean);
  s.stddev = finals.size() > 1 ? std::sqrt(ss / static_cast<double>(finals.size() - 1)) : 0.0;
  return s;
}

}  // namespace detail

/// Runs every seed of `cfg`. Seeds may run on up to `cfg.jobs` threads;
/// results are always ordered as in `cfg.seeds`.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentResult result;
  result.config = cfg;
  result.run_id = make_run_id(cfg);
  result.seeds.resize(cfg.seeds.size());

  TaskData data;
  const bool gossip_only = is_gossip_only(cfg.algorithm);
  if (!gossip_only) data = load_task(cfg.task);

  auto run_one = [&](std::size_t k) {
    result.seeds[k] = gossip_only ? detail::run_gossip_seed(cfg, cfg.seeds[k], result.run_id)
                                  : detail::run_training_seed(cfg, data, cfg.seeds[k], result.run_id);
  };
  const std::size_t workers = std::min(cfg.jobs, cfg.seeds.size());
  if (workers <= 1) {
    for (std::size_t k = 0; k < cfg.seeds.size(); ++k) run_one(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < cfg.seeds.size(); k = next++) run_one(k);
      });
    }
    for (auto& th : pool) th.join();
  }
  result.summary = detail::summarize(cfg, result.seeds);
  return result;
}

enum class SweepAxis { beta, agents, gamma };

inline SweepAxis parse_sweep_axis(std::string_view s) {
  if (s == "beta") return SweepAxis::beta;
  if (s == "agents") return SweepAxis::agents;
  if (s == "gamma") return SweepAxis::gamma;
  throw ConfigError("unknown sweep axis `" + std::string(s) + "` (expected beta, agents, gamma)");
}

inline std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::beta: return "beta";
    case SweepAxis::agents: return "agents";
    case SweepAxis::gamma: return "gamma";
  }
  return "?";
}

struct SweepRow {
  double value = 0.0;
  ExperimentSummary summary;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::gamma;
  std::vector<SweepRow> rows;
  std::vector<ExperimentResult> runs;

  /// Row with the best summary metric (highest accuracy, or lowest
  /// consensus distance for gossip-only runs). Ties keep the earlier row.
  const SweepRow& best() const {
    if (rows.empty()) throw ConfigError("empty sweep");
    const SweepRow* best = nullptr;
    for (const auto& r : rows) {
      if (std::isnan(r.summary.mean)) continue;
      const bool lower_is_better = r.summary.metric == "consensus_distance";
      if (!best || (lower_is_better ? r.summary.mean < best->summary.mean : r.summary.mean > best->summary.mean)) {
        best = &r;
      }
    }
    return best ? *best : rows.front();
  }
};

/// Applies one sweep value to a copy of `base` and re-validates it.
inline ExperimentConfig with_axis_value(const ExperimentConfig& base, SweepAxis axis, double value) {
  ExperimentConfig cfg = base;
  switch (axis) {
    case SweepAxis::beta: cfg.gossip.beta = value; break;
    case SweepAxis::gamma: cfg.gossip.gamma = value; break;
    case SweepAxis::agents:
      if (value < 1 || value != std::floor(value)) throw ConfigError("agent counts must be positive integers");
      cfg.agents = static_cast<std::size_t>(value);
      break;
  }
  try {
    cfg.gossip.validate();
    (void)make_topology(cfg.topology, cfg.agents);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

inline SweepResult sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  SweepResult result;
  result.axis = axis;
  for (double v : values) {
    auto run = run_experiment(with_axis_value(base, axis, v));
    result.rows.push_back({v, run.summary});
    result.runs.push_back(std::move(run));
  }
  return result;
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& result) {
  os << "# adagossip-sweep v1\n";
  const bool distance = !result.rows.empty() && result.rows.front().summary.metric == "consensus_distance";
  os << (distance ? "axis,value,mean_distance,std_distance,seeds_ok\n" : "axis,value,mean_acc,std_acc,seeds_ok\n");
  for (const auto& r : result.rows) {
    os << to_string(result.axis) << ',' << format_double(r.value) << ',' << format_double(r.summary.mean) << ',' << format_double(r.summary.stddev) << ',' << r.summary.seeds_ok
       << '\n';
  }
  if (!result.rows.empty()) os << "# best " << to_string(result.axis) << '=' << format_double(result.best().value) << '\n';
}

}  // namespace adagossip

#endif  // ADAGOSSIP_EXPERIMENT_HPP_
