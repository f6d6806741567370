#ifndef ADAGOSSIP_TOPOLOGY_HPP_
#define ADAGOSSIP_TOPOLOGY_HPP_

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adagossip/errors.hpp"

namespace adagossip {

enum class TopologyKind { ring, dyck, torus, fully_connected };

inline std::string_view to_string(TopologyKind kind) {
  switch (kind) {
    case TopologyKind::ring: return "ring";
    case TopologyKind::dyck: return "dyck";
    case TopologyKind::torus: return "torus";
    case TopologyKind::fully_connected: return "full";
  }
  return "?";
}

inline constexpr double kStochasticTolerance = 1e-12;

/// Symmetric doubly stochastic gossip weights with self-loops.
///
/// Instances are only produced by the builders below and are validated on
/// construction, so every MixingMatrix in circulation satisfies the row/column
/// sum, symmetry, self-loop and connectivity invariants.
class MixingMatrix {
 public:
  std::size_t size() const { return n_; }
  TopologyKind kind() const { return kind_; }

  double operator()(std::size_t i, std::size_t j) const { return w_[i * n_ + j]; }

  /// Agents with a nonzero weight in row i, self included, ascending.
  std::span<const std::size_t> neighbors(std::size_t i) const { return neighbors_[i]; }

  /// Number of outgoing communication links (self-loop excluded).
  std::size_t out_degree(std::size_t i) const { return neighbors_[i].size() - 1; }

  /// Row-major n*n weights.
  std::span<const double> dense() const { return w_; }

  /// Builds W with uniform weight 1/(deg+1) on every edge and self-loop.
  /// `adjacency[i]` lists the graph neighbors of i (self excluded).
  static MixingMatrix uniform(TopologyKind kind,
                              const std::vector<std::set<std::size_t>>& adjacency) {
    MixingMatrix m;
    m.kind_ = kind;
    m.n_ = adjacency.size();
    m.w_.assign(m.n_ * m.n_, 0.0);
    m.neighbors_.resize(m.n_);
    for (std::size_t i = 0; i < m.n_; ++i) {
      for (std::size_t j : adjacency[i]) {
        if (j >= m.n_ || j == i || !adjacency[j].contains(i)) {
          throw TopologyError("adjacency is not a simple undirected graph at node " +
                              std::to_string(i));
        }
      }
    }
    for (std::size_t i = 0; i < m.n_; ++i) {
      // Every pair is written from one computation so w_ij == w_ji bitwise.
      for (std::size_t j : adjacency[i]) {
        if (j < i) continue;
        const double w = 1.0 / static_cast<double>(adjacency[i].size() + 1);
        m.w_[i * m.n_ + j] = w;
        m.w_[j * m.n_ + i] = w;
      }
      m.w_[i * m.n_ + i] = 1.0 / static_cast<double>(adjacency[i].size() + 1);
      m.neighbors_[i].assign(adjacency[i].begin(), adjacency[i].end());
      m.neighbors_[i].push_back(i);
      std::sort(m.neighbors_[i].begin(), m.neighbors_[i].end());
    }
    m.validate();
    return m;
  }

 private:
  MixingMatrix() = default;

  void validate() const;

  TopologyKind kind_ = TopologyKind::ring;
  std::size_t n_ = 0;
  std::vector<double> w_;
  std::vector<std::vector<std::size_t>> neighbors_;
};

/// True when the graph over nonzero off-diagonal entries has one component.
inline bool is_connected(std::span<const double> weights, std::size_t n) {
  if (n == 0) return false;
  std::vector<bool> seen(n, false);
  std::queue<std::size_t> frontier;
  frontier.push(0);
  seen[0] = true;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    const std::size_t i = frontier.front();
    frontier.pop();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && weights[i * n + j] != 0.0 && !seen[j]) {
        seen[j] = true;
        ++reached;
        frontier.push(j);
      }
    }
  }
  return reached == n;
}

inline void MixingMatrix::validate() const {
  if (n_ == 0) throw TopologyError("mixing matrix has no agents");
  for (std::size_t i = 0; i < n_; ++i) {
    double row = 0.0;
    double col = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      const double w = w_[i * n_ + j];
      if (!(w >= 0.0 && w <= 1.0)) throw TopologyError("weight outside [0,1]");
      if (w != w_[j * n_ + i]) throw TopologyError("mixing matrix is not symmetric");
      row += w;
      col += w_[j * n_ + i];
    }
    if (std::abs(row - 1.0) > kStochasticTolerance ||
        std::abs(col - 1.0) > kStochasticTolerance) {
      throw TopologyError("mixing matrix is not doubly stochastic at row " +
                          std::to_string(i));
    }
    if (!(w_[i * n_ + i] > 0.0)) throw TopologyError("missing self-loop");
  }
  if (!is_connected(w_, n_)) throw TopologyError("communication graph is disconnected");
}

inline MixingMatrix build_ring(std::size_t n) {
  if (n < 3) {
    throw TopologyError("ring needs at least 3 agents (got " + std::to_string(n) + ")");
  }
  std::vector<std::set<std::size_t>> adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    adj[i].insert((i + 1) % n);
    adj[i].insert((i + n - 1) % n);
  }
  return MixingMatrix::uniform(TopologyKind::ring, adj);
}

inline MixingMatrix build_torus(std::size_t rows, std::size_t cols) {
  if (rows < 3 || cols < 3) {
    throw TopologyError("torus dimensions must both be >= 3 (got " + std::to_string(rows) +
                        "x" + std::to_string(cols) + ")");
  }
  const std::size_t n = rows * cols;
  std::vector<std::set<std::size_t>> adj(n);
  auto id = [cols](std::size_t r, std::size_t c) { return r * cols + c; };
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      auto& s = adj[id(r, c)];
      s.insert(id((r + 1) % rows, c));
      s.insert(id((r + rows - 1) % rows, c));
      s.insert(id(r, (c + 1) % cols));
      s.insert(id(r, (c + cols - 1) % cols));
    }
  }
  return MixingMatrix::uniform(TopologyKind::torus, adj);
}

/// Dyck graph: 32-cycle plus chords from the LCF code [5,-5,13,-13]^8.
inline MixingMatrix build_dyck() {
  constexpr std::size_t n = 32;
  constexpr std::array<int, 4> lcf{5, -5, 13, -13};
  std::vector<std::set<std::size_t>> adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    adj[i].insert((i + 1) % n);
    adj[i].insert((i + n - 1) % n);
    const int shift = lcf[i % lcf.size()];
    const auto j = static_cast<std::size_t>((static_cast<int>(i) + shift + 32) % 32);
    adj[i].insert(j);
    adj[j].insert(i);
  }
  return MixingMatrix::uniform(TopologyKind::dyck, adj);
}

inline MixingMatrix build_fully_connected(std::size_t n) {
  if (n < 1) throw TopologyError("fully connected graph needs at least 1 agent");
  std::vector<std::set<std::size_t>> adj(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) adj[i].insert(j);
  return MixingMatrix::uniform(TopologyKind::fully_connected, adj);
}

struct SpectralGapReport {
  double gap = 0.0;
  bool connected = false;
};

/// 1 - |lambda_2| of a dense symmetric weight matrix. Disconnected inputs
/// report gap 0 with `connected == false`.
inline SpectralGapReport spectral_gap_report(std::span<const double> weights, std::size_t n) {
  SpectralGapReport report;
  report.connected = is_connected(weights, n);
  if (!report.connected) return report;
  if (n == 1) {
    report.gap = 1.0;
    return report;
  }
  Eigen::MatrixXd m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = weights[i * n + j];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
  std::vector<double> mags(n);
  for (std::size_t k = 0; k < n; ++k) mags[k] = std::abs(solver.eigenvalues()[k]);
  std::sort(mags.begin(), mags.end(), std::greater<>());
  report.gap = std::clamp(1.0 - mags[1], 0.0, 1.0);
  return report;
}

inline double spectral_gap(const MixingMatrix& w) {
  return spectral_gap_report(w.dense(), w.size()).gap;
}

/// Parses `ring`, `dyck32`, `torus`, `torus:RxC` or `full` for `agents` agents.
inline MixingMatrix make_topology(std::string_view spec, std::size_t agents) {
  if (spec == "ring") return build_ring(agents);
  if (spec == "full") return build_fully_connected(agents);
  if (spec == "dyck32" || spec == "dyck") {
    if (agents != 32) {
      throw TopologyError("dyck32 topology requires exactly 32 agents (got " +
                          std::to_string(agents) + ")");
    }
    return build_dyck();
  }
  if (spec == "torus") {
    if (agents != 32) throw TopologyError("bare `torus` means 4x8; use torus:RxC for " +
                                          std::to_string(agents) + " agents");
    return build_torus(4, 8);
  }
  if (spec.starts_with("torus:")) {
    const std::string dims(spec.substr(6));
    const auto x = dims.find('x');
    std::size_t rows = 0, cols = 0;
    try {
      if (x == std::string::npos) throw std::invalid_argument("no x");
      std::size_t used = 0;
      rows = std::stoul(dims.substr(0, x), &used);
      if (used != x) throw std::invalid_argument("rows");
      const std::string c = dims.substr(x + 1);
      cols = std::stoul(c, &used);
      if (used != c.size()) throw std::invalid_argument("cols");
    } catch (const std::logic_error&) {
      throw TopologyError("malformed torus spec `" + std::string(spec) + "`, expected torus:RxC");
    }
    if (rows * cols != agents) {
      throw TopologyError("torus " + dims + " has " + std::to_string(rows * cols) +
                          " nodes but " + std::to_string(agents) + " agents were requested");
    }
    return build_torus(rows, cols);
  }
  throw TopologyError("unknown topology `" + std::string(spec) + "`");
}

}  // namespace adagossip

#endif  // ADAGOSSIP_TOPOLOGY_HPP_
