#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "adagossip/models_data.hpp"

using namespace adagossip;

namespace {

std::vector<std::size_t> all_rows(const Dataset& ds) {
  std::vector<std::size_t> rows(ds.samples());
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

// Full-batch gradient descent; returns trained parameters.
std::vector<double> train_centralized(const ModelSpec& model, const Dataset& ds, int steps, double lr) {
  std::vector<double> p(model.param_count(), 0.0);
  const auto rows = all_rows(ds);
  for (int t = 0; t < steps; ++t) {
    const auto lg = forward_backward(model, p, Batch{ds, rows});
    for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr * lg.grad[k];
  }
  return p;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("adagossip_test_" + name);
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const ParseError& e) {
    return e.what();
  }
  return {};
}

void check_finite_differences(const ModelSpec& model, std::uint64_t seed) {
  const auto ds = generate_synthetic_classification(seed, 24, model.input_dim(), model.output_dim(), 1.0);
  Rng rng(seed);
  auto p = init_params(model, rng);
  std::normal_distribution<double> g(0.0, 0.3);
  for (auto& v : p) v += g(rng);  // nonzero biases too
  const std::vector<std::size_t> rows{0, 3, 5, 7, 11, 12, 19, 23};
  const auto analytic = forward_backward(model, p, Batch{ds, rows}).grad;
  const double h = 1e-5;
  double gmax = 0.0;
  for (double v : analytic) gmax = std::max(gmax, std::abs(v));
  for (std::size_t k = 0; k < p.size(); ++k) {
    auto plus = p, minus = p;
    plus[k] += h;
    minus[k] -= h;
    const double fd = (forward_backward(model, plus, Batch{ds, rows}).loss -
                       forward_backward(model, minus, Batch{ds, rows}).loss) / (2.0 * h);
    EXPECT_LE(std::abs(fd - analytic[k]), 1e-6 * std::max(std::abs(fd), 1e-3 * gmax)) << "param " << k;
  }
}

}  // namespace

TEST(Synthetic, DeterministicInSeed) {
  const auto a = generate_synthetic_classification(3, 100, 6, 3, 2.0);
  const auto b = generate_synthetic_classification(3, 100, 6, 3, 2.0);
  const auto c = generate_synthetic_classification(4, 100, 6, 3, 2.0);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.features, c.features);
}

TEST(Synthetic, RejectsBadSizes) {
  EXPECT_THROW(generate_synthetic_classification(1, 100, 6, 1, 1.0), NumericError);
  EXPECT_THROW(generate_synthetic_classification(1, 2, 6, 3, 1.0), NumericError);
  EXPECT_THROW(generate_synthetic_classification(1, 100, 2, 3, 1.0), NumericError);
}

TEST(Synthetic, ZeroSeparationIsChance) {
  const auto all = generate_synthetic_classification(5, 6000, 16, 4, 0.0);
  std::vector<std::size_t> train_rows(2000), test_rows(4000);
  std::iota(train_rows.begin(), train_rows.end(), 0);
  std::iota(test_rows.begin(), test_rows.end(), 2000);
  const auto model = ModelSpec::logreg(16, 4);
  const auto p = train_centralized(model, subset(all, train_rows), 300, 0.5);
  const auto ev = evaluate(model, p, subset(all, test_rows));
  // sd of a chance accuracy over 4000 samples is about 0.007
  EXPECT_NEAR(ev.accuracy, 0.25, 0.035);
}

TEST(Synthetic, WideSeparationIsLearnable) {
  const auto ds = generate_synthetic_classification(6, 2000, 16, 4, 5.0);
  const auto model = ModelSpec::logreg(16, 4);
  const auto p = train_centralized(model, ds, 300, 0.5);
  EXPECT_GE(evaluate(model, p, ds).accuracy, 0.95);
}

TEST(Partition, EqualShards) {
  Dataset ds;
  ds.input_dim = 1;
  ds.num_classes = 10;
  ds.labels.resize(50000);
  for (std::size_t i = 0; i < ds.labels.size(); ++i) ds.labels[i] = static_cast<int>(i % 10);
  ds.features.assign(50000, 0.0);
  const auto part = partition_iid(ds, 16, 99);
  ASSERT_EQ(part.shards.size(), 16u);
  std::set<std::size_t> seen;
  for (const auto& s : part.shards) {
    EXPECT_EQ(s.size(), 3125u);
    seen.insert(s.begin(), s.end());
  }
  EXPECT_EQ(seen.size(), 50000u);

  // Hypergeometric draw of 3125 from 50000 with 5000 per class.
  const double p = 0.1;
  const double sd = std::sqrt(3125.0 * p * (1.0 - p) * (50000.0 - 3125.0) / (50000.0 - 1.0));
  for (const auto& s : part.shards) {
    std::vector<int> hist(10, 0);
    for (auto r : s) ++hist[static_cast<std::size_t>(ds.labels[r])];
    for (int h : hist) EXPECT_LE(std::abs(h - 312.5), 3.0 * sd);
  }
}

TEST(Partition, SingleAgentIsPermutation) {
  const auto ds = generate_synthetic_classification(1, 101, 3, 3, 1.0);
  const auto part = partition_iid(ds, 1, 5);
  ASSERT_EQ(part.shards.size(), 1u);
  auto rows = part.shards[0];
  EXPECT_NE(rows, all_rows(ds));
  std::sort(rows.begin(), rows.end());
  EXPECT_EQ(rows, all_rows(ds));
}

TEST(Partition, DropsRemainderAndIsDisjoint) {
  const auto ds = generate_synthetic_classification(1, 103, 3, 3, 1.0);
  const auto part = partition_iid(ds, 5, 5);
  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (const auto& s : part.shards) {
    EXPECT_EQ(s.size(), 20u);
    total += s.size();
    for (auto r : s) EXPECT_LT(r, 103u);
    seen.insert(s.begin(), s.end());
  }
  EXPECT_EQ(seen.size(), total);
  EXPECT_EQ(total, 100u);
  EXPECT_EQ(partition_iid(ds, 5, 5).shards, part.shards);
  EXPECT_THROW(partition_iid(ds, 104, 5), NumericError);
  EXPECT_THROW(partition_iid(ds, 0, 5), NumericError);
}

TEST(Model, ParamCount) {
  EXPECT_EQ(ModelSpec::mlp({16, 32, 4}).param_count(), 676u);
  EXPECT_EQ(ModelSpec::mlp({5, 6, 2}).param_count(), 50u);
  EXPECT_EQ(ModelSpec::logreg(16, 4).param_count(), 68u);
}

TEST(Model, ZeroLogregLossIsLnTwo) {
  const auto ds = generate_synthetic_classification(2, 10, 3, 2, 1.0);
  const auto model = ModelSpec::logreg(3, 2);
  const std::vector<std::size_t> rows{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const auto lg = forward_backward(model, std::vector<double>(model.param_count(), 0.0), Batch{ds, rows});
  EXPECT_NEAR(lg.loss, std::log(2.0), 1e-15);
}

TEST(Model, GradientMatchesFiniteDifferences) {
  check_finite_differences(ModelSpec::mlp({5, 6, 2}), 1);
  check_finite_differences(ModelSpec::logreg(7, 3), 2);
  check_finite_differences(ModelSpec::mlp({4, 5, 3, 3}), 3);
  for (std::uint64_t seed = 10; seed < 15; ++seed) check_finite_differences(ModelSpec::mlp({3, 4, 3}), seed);
}

TEST(Model, DuplicatedBatchIsUnchanged) {
  const auto ds = generate_synthetic_classification(3, 30, 5, 2, 1.0);
  const auto model = ModelSpec::mlp({5, 6, 2});
  Rng rng(3);
  const auto p = init_params(model, rng);
  const std::vector<std::size_t> once{1, 4, 9, 16};
  const std::vector<std::size_t> twice{1, 4, 9, 16, 1, 4, 9, 16};
  const auto a = forward_backward(model, p, Batch{ds, once});
  const auto b = forward_backward(model, p, Batch{ds, twice});
  EXPECT_NEAR(a.loss, b.loss, 1e-12);
  for (std::size_t k = 0; k < p.size(); ++k) EXPECT_NEAR(a.grad[k], b.grad[k], 1e-12);
}

TEST(Model, LossPermutationInvariantAndAdditive) {
  const auto ds = generate_synthetic_classification(4, 40, 5, 3, 1.0);
  const auto model = ModelSpec::mlp({5, 4, 3});
  Rng rng(9);
  const auto p = init_params(model, rng);
  std::vector<std::size_t> rows{0, 5, 9, 13, 22, 31, 35};
  const auto base = forward_backward(model, p, Batch{ds, rows}).loss;
  std::shuffle(rows.begin(), rows.end(), rng);
  EXPECT_NEAR(forward_backward(model, p, Batch{ds, rows}).loss, base, 1e-12);

  const std::vector<std::size_t> left{0, 1, 2}, right{3, 4, 5, 6, 7}, both{0, 1, 2, 3, 4, 5, 6, 7};
  const double weighted = (3.0 * forward_backward(model, p, Batch{ds, left}).loss +
                           5.0 * forward_backward(model, p, Batch{ds, right}).loss) / 8.0;
  EXPECT_NEAR(forward_backward(model, p, Batch{ds, both}).loss, weighted, 1e-12);
}

TEST(Model, RejectsBadInputs) {
  const auto ds = generate_synthetic_classification(4, 40, 5, 3, 1.0);
  const auto model = ModelSpec::mlp({5, 4, 3});
  const std::vector<std::size_t> rows{0, 1};
  const std::vector<std::size_t> none;
  EXPECT_THROW(forward_backward(model, std::vector<double>(3, 0.0), Batch{ds, rows}), NumericError);
  EXPECT_THROW(forward_backward(model, std::vector<double>(model.param_count(), 0.0), Batch{ds, none}), NumericError);
  std::vector<double> huge(model.param_count(), std::numeric_limits<double>::quiet_NaN());
  EXPECT_THROW(forward_backward(model, huge, Batch{ds, rows}), NumericError);
}

TEST(Csv, FourRowsTwoFeatures) {
  const auto path = temp_file("four.csv");
  std::ofstream(path) << "a,b,label\n0.5,1.0,0\n-1,2,1\n3,4.5,1\n0,0,2\n";
  const auto ds = load_dataset(path.string(), DatasetFormat::csv, true);
  EXPECT_EQ(ds.samples(), 4u);
  EXPECT_EQ(ds.input_dim, 2u);
  EXPECT_EQ(ds.num_classes, 3u);
  EXPECT_EQ(ds.features, (std::vector<double>{0.5, 1.0, -1, 2, 3, 4.5, 0, 0}));
  EXPECT_EQ(ds.labels, (std::vector<int>{0, 1, 1, 2}));
  std::filesystem::remove(path);
}

TEST(Csv, MalformedRowsNameTheLine) {
  const auto path = temp_file("bad.csv");
  std::ofstream(path) << "0.5,1.0,0\n-1,x,1\n";
  EXPECT_NE(error_of([&] { load_csv(path.string(), false); }).find("line 2"), std::string::npos);
  std::ofstream(path) << "0.5,1.0,0\n-1,1\n";
  EXPECT_NE(error_of([&] { load_csv(path.string(), false); }).find("line 2"), std::string::npos);
  std::ofstream(path) << "0.5,1.0,-1\n";
  EXPECT_FALSE(error_of([&] { load_csv(path.string(), false); }).empty());
  std::filesystem::remove(path);
  EXPECT_FALSE(error_of([&] { load_csv(path.string(), false); }).empty());
}

TEST(Idx, ReadsHeaderDims) {
  const auto images = temp_file("images.idx");
  const auto labels = temp_file("labels.idx");
  std::vector<std::uint8_t> img{0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3};
  for (int k = 0; k < 12; ++k) img.push_back(static_cast<std::uint8_t>(k * 20));
  img[16 + 11] = 255;
  write_bytes(images, img);
  write_bytes(labels, {0, 0, 8, 1, 0, 0, 0, 2, 1, 0});

  const auto t = read_idx(images.string());
  EXPECT_EQ(t.dims, (std::vector<std::size_t>{2, 2, 3}));
  const auto ds = load_dataset(images.string(), DatasetFormat::idx, false, labels.string());
  EXPECT_EQ(ds.samples(), 2u);
  EXPECT_EQ(ds.input_dim, 6u);
  EXPECT_EQ(ds.labels, (std::vector<int>{1, 0}));
  EXPECT_DOUBLE_EQ(ds.features[1], 20.0 / 255.0);
  EXPECT_DOUBLE_EQ(ds.features[11], 1.0);
  std::filesystem::remove(images);
  std::filesystem::remove(labels);
}

TEST(Idx, TruncatedFileNamesByteCounts) {
  const auto path = temp_file("short.idx");
  write_bytes(path, {0, 0, 8, 1, 0, 0, 0, 10, 1, 2, 3});
  const auto msg = error_of([&] { read_idx(path.string()); });
  EXPECT_NE(msg.find("expected 10"), std::string::npos) << msg;
  EXPECT_NE(msg.find("found 3"), std::string::npos) << msg;
  write_bytes(path, {0, 0, 8, 2, 0, 0});
  EXPECT_NE(error_of([&] { read_idx(path.string()); }).find("truncated header"), std::string::npos);
  write_bytes(path, {0, 0, 9, 1, 0, 0, 0, 0});
  EXPECT_NE(error_of([&] { read_idx(path.string()); }).find("offset 0"), std::string::npos);
  std::filesystem::remove(path);
}
