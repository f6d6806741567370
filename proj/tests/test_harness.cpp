#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "adagossip/adagossip.hpp"

using namespace adagossip;

namespace {

// A few-second training config: 4-agent ring, 800 samples, 3 epochs.
ExperimentConfig small_training(std::string algorithm = "adag") {
  ConfigMap m{{"algorithm", algorithm}, {"topology", "ring"},     {"agents", "4"},
              {"compressor", algorithm == "dsgd" ? "none" : "topk:0.9"},
              {"gamma", "0.05"},        {"epochs", "3"},          {"batch", "16"},
              {"train_samples", "800"}, {"test_samples", "200"},  {"hidden", "8"},
              {"seeds", "1,2"}};
  return resolve_config(m);
}

std::string csv_of(const ExperimentResult& r) {
  std::ostringstream os;
  write_metrics_csv(os, r);
  return os.str();
}

std::vector<MetricsRecord> rows_of(const ExperimentResult& r, std::uint64_t seed) {
  for (const auto& s : r.seeds)
    if (s.seed == seed) return s.records;
  return {};
}

std::string config_error(const ConfigMap& m) {
  try {
    resolve_config(m);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Config, TunedCellWithDefaults) {
  const auto cfg = resolve_config({}, {{"algorithm", "adag"},
                                       {"topology", "ring"},
                                       {"agents", "16"},
                                       {"compressor", "topk:0.9"},
                                       {"gamma", "0.01"}});
  EXPECT_EQ(cfg.algorithm, ExperimentAlgorithm::adag);
  EXPECT_EQ(cfg.agents, 16u);
  EXPECT_EQ(cfg.compressor, CompressorSpec::top_k(0.9));
  EXPECT_DOUBLE_EQ(cfg.gossip.gamma, 0.01);
  EXPECT_DOUBLE_EQ(cfg.gossip.beta, 0.999);
  EXPECT_DOUBLE_EQ(cfg.gossip.epsilon, 1e-8);
  EXPECT_EQ(cfg.seeds.size(), 3u);
}

TEST(Config, MissingGammaNeedsTuning) {
  const auto msg = config_error({{"algorithm", "choco"}, {"compressor", "topk:0.9"}});
  EXPECT_NE(msg.find("gamma is required"), std::string::npos) << msg;
  EXPECT_NE(msg.find("tuned"), std::string::npos) << msg;
  EXPECT_DOUBLE_EQ(resolve_config({{"algorithm", "dsgd"}}).gossip.gamma, 1.0);
}

TEST(Config, DsgdRejectsCompression) {
  const auto msg = config_error({{"algorithm", "dsgd"}, {"compressor", "topk:0.9"}});
  EXPECT_NE(msg.find("full-communication"), std::string::npos) << msg;
}

TEST(Config, RejectsUnknownAndMalformedValues) {
  EXPECT_THROW(parse_key_values("algorithm = adag\nlearning_rate = 0.1\n"), ConfigError);
  EXPECT_THROW(parse_key_values("algorithm adag\n"), ConfigError);
  EXPECT_FALSE(config_error({{"algorithm", "adag"}, {"gamma", "abc"}}).empty());
  EXPECT_FALSE(config_error({{"algorithm", "adag"}, {"gamma", "1.5"}}).empty());
  EXPECT_FALSE(config_error({{"algorithm", "adag"}, {"gamma", "0.1"}, {"beta", "1"}}).empty());
  EXPECT_FALSE(config_error({{"algorithm", "adag"}, {"gamma", "0.1"}, {"topology", "dyck32"}}).empty());
  EXPECT_FALSE(config_error({{"algorithm", "sgd"}}).empty());
  EXPECT_FALSE(config_error({{"algorithm", "adag"}, {"gamma", "0.1"}, {"compressor", "topk:2"}}).empty());
  EXPECT_FALSE(config_error({{"algorithm", "adag"}, {"gamma", "0.1"}, {"seeds", ""}}).empty());
  EXPECT_FALSE(config_error({{"preset", "paper/unknown"}}).empty());
}

TEST(Config, FileThenOverridesPrecedence) {
  const auto path = std::filesystem::temp_directory_path() / "adagossip_test_run.cfg";
  std::ofstream(path) << "# sample\nalgorithm = choco\ngamma = 0.2\ncompressor=quant:4\nagents = 8\n";
  const auto cfg = parse_config(path.string(), {{"gamma", "0.3"}});
  EXPECT_EQ(cfg.algorithm, ExperimentAlgorithm::choco);
  EXPECT_DOUBLE_EQ(cfg.gossip.gamma, 0.3);
  EXPECT_EQ(cfg.compressor, CompressorSpec::quant(4));
  EXPECT_EQ(cfg.agents, 8u);
  std::filesystem::remove(path);
  EXPECT_THROW(parse_config(path.string(), {}), ConfigError);
}

TEST(Presets, ExpandTunedCells) {
  const auto cfg = resolve_config({{"preset", "paper/cifar10-ring16-topk90-adag"}});
  EXPECT_EQ(cfg.algorithm, ExperimentAlgorithm::adag);
  EXPECT_EQ(cfg.topology, "ring");
  EXPECT_EQ(cfg.agents, 16u);
  EXPECT_EQ(cfg.compressor, CompressorSpec::top_k(0.9));
  EXPECT_DOUBLE_EQ(cfg.gossip.gamma, 0.01);
  EXPECT_DOUBLE_EQ(cfg.gossip.beta, 0.999);
  EXPECT_DOUBLE_EQ(cfg.optimizer.lr0, 0.1);
  EXPECT_EQ(cfg.optimizer.epochs, 200u);
  EXPECT_DOUBLE_EQ(cfg.optimizer.momentum, 0.9);
  EXPECT_EQ(cfg.optimizer.batch_size, 32u);
  EXPECT_DOUBLE_EQ(cfg.optimizer.weight_decay, 1e-4);
}

TEST(Presets, TunedStepSizesMatchPublishedGrid) {
  const std::vector<std::pair<std::string, double>> cells{
      {"paper/cifar10-ring16-topk99-choco", 0.0375},   {"paper/cifar10-ring16-topk90-deepsqueeze", 0.05},
      {"paper/cifar10-ring32-quant8-adag", 0.02},      {"paper/cifar10-ring32-quant2-deepsqueeze", 0.03},
      {"paper/cifar10-ring16-quant8-choco", 0.7},      {"paper/cifar10-ring16-quant2-adag", 0.0008},
      {"paper/cifar10-dyck32-topk90-choco", 0.15},     {"paper/cifar10-torus32-topk99-adag", 0.001},
      {"paper/fmnist-ring16-topk90-adag", 0.002},      {"paper/cifar100-ring16-topk99-choco", 0.04},
      {"paper/imagenette-ring16-topk99-adag", 0.0003}, {"paper/imagenet-ring16-topk99-adag", 0.0001},
      {"paper/imagenet-ring16-topk90-choco", 0.3},     {"paper/cifar10-ring16-full-dsgd", 1.0},
  };
  for (const auto& [name, gamma] : cells) {
    const auto p = find_preset(name);
    ASSERT_TRUE(p.has_value()) << name;
    EXPECT_DOUBLE_EQ(p->gamma, gamma) << name;
    EXPECT_NO_THROW(resolve_config({{"preset", name}})) << name;
  }
  EXPECT_EQ(find_preset("paper/cifar10-torus32-topk90-adag")->topology, "torus:4x8");
  EXPECT_FALSE(find_preset("paper/fmnist-ring16-topk90-deepsqueeze").has_value());
}

TEST(PredictBytes, PublishedFiguresWithinFivePercent) {
  struct Cell {
    std::size_t agents;
    const char* compressor;
    double published_mb;
  };
  const std::vector<Cell> cells{{16, "none", 205},   {16, "topk:0.9", 30.7}, {16, "topk:0.99", 3.09},
                                {16, "quant:8", 51.2}, {16, "quant:4", 25.6},  {16, "quant:2", 12.8},
                                {32, "none", 102},   {32, "topk:0.9", 15.3}, {32, "topk:0.99", 1.55},
                                {32, "quant:8", 25.6}, {32, "quant:4", 12.8},  {32, "quant:2", 6.40}};
  for (const auto& c : cells) {
    const double mb = predicted_bytes_per_epoch(270000, 50000, c.agents, 32, "ring", parse_compressor(c.compressor));
    EXPECT_LE(std::abs(mb - c.published_mb), 0.05 * c.published_mb) << c.agents << ' ' << c.compressor << ' ' << mb;
  }
}

TEST(PredictBytes, HandComputedValues) {
  EXPECT_EQ(iterations_per_epoch(50000, 16, 32), 97u);
  EXPECT_EQ(iterations_per_epoch(50000, 32, 32), 48u);
  EXPECT_DOUBLE_EQ(predicted_bytes_per_epoch(270000, 50000, 16, 32, "ring", CompressorSpec::identity()), 209.52);
  EXPECT_DOUBLE_EQ(predicted_bytes_per_epoch(270000, 50000, 16, 32, "ring", CompressorSpec::quant(8)), 52.38);
  EXPECT_DOUBLE_EQ(predicted_bytes_per_epoch(270000, 50000, 16, 32, "ring", CompressorSpec::top_k(0.9)), 31.428);
  for (int bits : {2, 4, 8})
    EXPECT_EQ(predicted_bytes_per_epoch_exact(270000, 50000, 16, 32, 2, CompressorSpec::quant(bits)) * 32,
              predicted_bytes_per_epoch_exact(270000, 50000, 16, 32, 2, CompressorSpec::identity()) *
                  static_cast<std::uint64_t>(bits));
  EXPECT_EQ(predicted_bytes_per_epoch_exact(1000, 3200, 32, 32, 4, CompressorSpec::identity()), 3u * 4u * 4000u);
}

TEST(Ledger, AccumulatesPerAgent) {
  BytesLedger ledger(3);
  ledger.record_round(std::vector<std::uint64_t>{10, 20, 30});
  ledger.record_round(std::vector<std::uint64_t>{1, 2, 3});
  EXPECT_EQ(ledger.close_epoch(), (std::vector<std::uint64_t>{11, 22, 33}));
  ledger.record_round(std::vector<std::uint64_t>{5, 5, 5});
  EXPECT_EQ(ledger.close_epoch(), (std::vector<std::uint64_t>{5, 5, 5}));
  EXPECT_EQ(ledger.cumulative(2), 38u);
  EXPECT_DOUBLE_EQ(ledger.mean_cumulative(), (16.0 + 27.0 + 38.0) / 3.0);
  EXPECT_EQ(ledger.epoch_increments().size(), 2u);
  EXPECT_THROW(ledger.record_round(std::vector<std::uint64_t>{1, 2}), NumericError);
}

TEST(Rng, StreamsAreIndependentAndStable) {
  EXPECT_EQ(derive_seed(1, 2, "batches"), derive_seed(1, 2, "batches"));
  EXPECT_NE(derive_seed(1, 2, "batches"), derive_seed(1, 3, "batches"));
  EXPECT_NE(derive_seed(1, 2, "batches"), derive_seed(1, 2, "init"));
  EXPECT_NE(derive_seed(1, 2, "batches"), derive_seed(2, 2, "batches"));
  auto a = make_rng(9, 0, "x");
  auto b = make_rng(9, 0, "x");
  EXPECT_EQ(a(), b());
}

TEST(Run, RepeatedSeedGivesIdenticalSeries) {
  auto cfg = small_training();
  cfg.seeds = {1, 1};
  const auto r = run_experiment(cfg);
  ASSERT_TRUE(r.seeds[0].ok()) << r.seeds[0].error;
  EXPECT_EQ(r.seeds[0].records, r.seeds[1].records);
  EXPECT_EQ(r.summary.seeds_ok, 2u);
  EXPECT_EQ(r.summary.stddev, 0.0);
}

TEST(Run, RecordsAreWellFormed) {
  const auto r = run_experiment(small_training("choco"));
  for (const auto& s : r.seeds) {
    ASSERT_TRUE(s.ok()) << s.error;
    ASSERT_EQ(s.records.size(), 3u);
    double prev_mb = 0.0;
    for (std::size_t e = 0; e < s.records.size(); ++e) {
      const auto& rec = s.records[e];
      EXPECT_EQ(rec.epoch, e + 1);
      EXPECT_GT(rec.mb_transmitted_cumulative, prev_mb);
      prev_mb = rec.mb_transmitted_cumulative;
      EXPECT_GE(rec.test_accuracy, 0.0);
      EXPECT_LE(rec.test_accuracy, 1.0);
      EXPECT_GT(rec.train_loss, 0.0);
      EXPECT_GE(rec.consensus_distance, 0.0);
      EXPECT_EQ(rec.wall_seconds, 0.0);
    }
  }
}

TEST(Run, LedgerMatchesPrediction) {
  for (const char* alg : {"dsgd", "deepsqueeze", "choco", "adag"}) {
    const auto cfg = small_training(alg);
    const auto r = run_experiment(cfg);
    const std::size_t params = ModelSpec::mlp({16, 8, 4}).param_count();
    const auto per_epoch = predicted_bytes_per_epoch_exact(params, 800, 4, 16, 2, cfg.compressor);
    for (const auto& s : r.seeds) {
      ASSERT_TRUE(s.ok()) << s.error;
      for (const auto& epoch : s.epoch_bytes)
        for (auto b : epoch) EXPECT_EQ(b, per_epoch) << alg;
      for (const auto& rec : s.records)
        EXPECT_DOUBLE_EQ(rec.mb_transmitted_cumulative,
                         predicted_bytes_per_epoch(params, 800, 4, 16, "ring", cfg.compressor) *
                             static_cast<double>(rec.epoch))
            << alg;
    }
  }
}

TEST(Run, SingleAgentAdagIsPlainSgd) {
  auto cfg = small_training();
  cfg.agents = 1;
  cfg.topology = "full";
  cfg.seeds = {4};
  const auto r = run_experiment(cfg);
  ASSERT_TRUE(r.seeds[0].ok()) << r.seeds[0].error;

  // Single-process reference loop using the same RNG streams.
  const auto data = load_task(cfg.task);
  const auto part = partition_iid(data.train, 1, derive_seed(4, 0, "partition"));
  Rng init = make_rng(4, 0, "init");
  auto states = make_learner_states(init_params(data.model, init), build_fully_connected(1));
  Rng batches = make_rng(4, 0, "batches");
  const std::size_t iters = part.shards[0].size() / cfg.optimizer.batch_size;
  for (std::size_t epoch = 0; epoch < cfg.optimizer.epochs; ++epoch) {
    auto order = part.shards[0];
    std::shuffle(order.begin(), order.end(), batches);
    const double lr = lr_schedule(cfg.optimizer, epoch);
    double loss = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
      const std::span<const std::size_t> rows(order.data() + it * cfg.optimizer.batch_size, cfg.optimizer.batch_size);
      const auto fb = forward_backward(data.model, states[0].params(), Batch{data.train, rows});
      loss += fb.loss;
      local_sgd_step(states[0], fb.grad, lr, cfg.optimizer);
    }
    const auto& rec = r.seeds[0].records[epoch];
    EXPECT_EQ(rec.train_loss, loss / static_cast<double>(iters));
    EXPECT_EQ(rec.test_accuracy, evaluate(data.model, states[0].params(), data.test).accuracy);
    EXPECT_EQ(rec.lr, lr);
    EXPECT_EQ(rec.consensus_distance, 0.0);
    EXPECT_EQ(rec.mb_transmitted_cumulative, 0.0);
  }
}

TEST(Run, ChangingOneSeedOnlyChangesItsRows) {
  auto cfg = small_training("deepsqueeze");
  cfg.seeds = {1, 2, 3};
  const auto a = run_experiment(cfg);
  cfg.seeds = {1, 5, 3};
  const auto b = run_experiment(cfg);
  EXPECT_EQ(rows_of(a, 1), rows_of(b, 1));
  EXPECT_EQ(rows_of(a, 3), rows_of(b, 3));
  EXPECT_NE(rows_of(a, 2), rows_of(b, 5));
}

TEST(Run, ParallelSeedsMatchSequential) {
  auto cfg = small_training();
  cfg.seeds = {1, 2, 3};
  const auto sequential = csv_of(run_experiment(cfg));
  cfg.jobs = 3;
  EXPECT_EQ(csv_of(run_experiment(cfg)), sequential);
}

TEST(Run, CsvHeaderReplaysBitIdentically) {
  const auto first = csv_of(run_experiment(small_training("choco")));
  EXPECT_TRUE(first.starts_with(std::string(kMetricsSchema) + "\n"));
  EXPECT_NE(first.find(std::string(kMetricsColumns) + "\n"), std::string::npos);
  const auto replayed = resolve_config(config_from_metrics_header(first));
  EXPECT_EQ(csv_of(run_experiment(replayed)), first);

  const auto path = std::filesystem::temp_directory_path() / "adagossip_test_replay.csv";
  std::ofstream(path) << first;
  EXPECT_EQ(csv_of(run_experiment(parse_config(path.string(), {}))), first);
  std::filesystem::remove(path);
}

TEST(Run, EngineFailureIsRecordedPerSeed) {
  auto cfg = small_training();
  cfg.optimizer.batch_size = 500;  // shard of 200 cannot fill a batch
  const auto r = run_experiment(cfg);
  EXPECT_EQ(r.summary.seeds_failed, 2u);
  EXPECT_EQ(r.summary.seeds_ok, 0u);
  EXPECT_FALSE(r.seeds[0].error.empty());
  std::ostringstream os;
  write_summary(os, r);
  EXPECT_NE(os.str().find("seed 1 failed"), std::string::npos);
}

TEST(Run, GossipOnlyEmitsOneRowPerRound) {
  const auto cfg = resolve_config({{"algorithm", "gossip_only_adag"}, {"agents", "8"}, {"compressor", "topk:0.9"},
                                   {"gamma", "0.05"}, {"dim", "50"}, {"rounds", "30"}, {"seeds", "1"}});
  const auto r = run_experiment(cfg);
  ASSERT_TRUE(r.seeds[0].ok()) << r.seeds[0].error;
  ASSERT_EQ(r.seeds[0].records.size(), 30u);
  EXPECT_EQ(r.summary.metric, "consensus_distance");
  // 8-agent ring, 5 kept entries of 6 bytes to 2 neighbours per round.
  EXPECT_DOUBLE_EQ(r.seeds[0].records[9].mb_transmitted_cumulative, 10 * 60 / 1e6);
}

TEST(Sweep, AgentsAxisGivesOneRowPerValue) {
  auto cfg = small_training();
  cfg.seeds = {1};
  cfg.optimizer.epochs = 1;
  const auto s = sweep(cfg, SweepAxis::agents, {3, 4, 5});
  ASSERT_EQ(s.rows.size(), 3u);
  std::ostringstream os;
  write_sweep_csv(os, s);
  EXPECT_NE(os.str().find("axis,value,mean_acc,std_acc,seeds_ok\n"), std::string::npos);
  EXPECT_NE(os.str().find("agents,5,"), std::string::npos);
  EXPECT_THROW(sweep(cfg, SweepAxis::agents, {}), ConfigError);
  EXPECT_THROW(sweep(cfg, SweepAxis::agents, {2.5}), ConfigError);
}

TEST(Sweep, GammaArgmaxIsRecorded) {
  const auto cfg = resolve_config({{"algorithm", "gossip_only_choco"}, {"agents", "8"}, {"compressor", "topk:0.9"},
                                   {"gamma", "0.1"}, {"dim", "40"}, {"rounds", "200"}, {"seeds", "1"}});
  const std::vector<double> grid{0.001, 0.01, 0.1, 0.3};
  const auto s = sweep(cfg, SweepAxis::gamma, grid);
  double best_value = 0.0, best_distance = 1e300;
  for (const auto& row : s.rows)
    if (row.summary.mean < best_distance) {
      best_distance = row.summary.mean;
      best_value = row.value;
    }
  EXPECT_EQ(s.best().value, best_value);
  std::ostringstream os;
  write_sweep_csv(os, s);
  EXPECT_NE(os.str().find("# best gamma=" + format_double(best_value)), std::string::npos) << os.str();
  EXPECT_THROW(sweep(cfg, SweepAxis::gamma, {1.5}), ConfigError);
}
