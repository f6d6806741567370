#ifndef ADAGOSSIP_CONSENSUS_HPP_
#define ADAGOSSIP_CONSENSUS_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "adagossip/compression.hpp"
#include "adagossip/errors.hpp"
#include "adagossip/topology.hpp"

namespace adagossip {

/// Per-agent state of compressed gossip.
///
/// `x` is the private value, `x_hat[j]` this agent's copy of the public
/// value of neighbor j (self included) and `u` the running second raw moment
/// of the gossip-error. Gossip-errors and messages are per-round temporaries.
struct GossipAgentState {
  std::size_t id = 0;
  std::vector<double> x;
  std::map<std::size_t, std::vector<double>> x_hat;
  std::vector<double> u;
  std::uint64_t round = 0;

  std::size_t dim() const { return x.size(); }
};

struct GossipHyperParams {
  double gamma = 1.0;
  double beta = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) {
      throw NumericError("consensus step-size gamma must lie in (0,1], got " + std::to_string(gamma));
    }
    if (!(beta >= 0.0 && beta < 1.0)) {
      throw NumericError("beta must lie in [0,1), got " + std::to_string(beta));
    }
    if (!(epsilon > 0.0)) throw NumericError("epsilon must be positive");
  }
};

/// Fresh state: public copies and u start at zero.
inline GossipAgentState make_gossip_state(std::size_t id, std::vector<double> x0,
                                          const MixingMatrix& w) {
  GossipAgentState s;
  s.id = id;
  const std::size_t d = x0.size();
  s.x = std::move(x0);
  for (std::size_t j : w.neighbors(id)) s.x_hat.emplace(j, std::vector<double>(d, 0.0));
  s.u.assign(d, 0.0);
  return s;
}

inline std::vector<GossipAgentState> make_gossip_states(
    const std::vector<std::vector<double>>& initial, const MixingMatrix& w) {
  if (initial.size() != w.size()) {
    throw NumericError("got " + std::to_string(initial.size()) + " initial values for " +
                       std::to_string(w.size()) + " agents");
  }
  std::vector<GossipAgentState> states;
  states.reserve(initial.size());
  for (std::size_t i = 0; i < initial.size(); ++i) states.push_back(make_gossip_state(i, initial[i], w));
  return states;
}

/// Sets every public copy to the owner's current private value.
inline void warm_start_public_copies(std::span<GossipAgentState> states) {
  for (auto& s : states)
    for (auto& [j, copy] : s.x_hat) copy = states[j].x;
}

/// Gossip-errors of one round and the bytes each agent put on the wire.
struct Exchange {
  std::vector<std::vector<double>> gossip_error;
  std::vector<std::uint64_t> bytes_sent;
};

namespace detail {

inline void check_round_inputs(std::span<const GossipAgentState> states, const MixingMatrix& w) {
  if (states.size() != w.size()) {
    throw NumericError("mixing matrix has " + std::to_string(w.size()) + " agents but " +
                       std::to_string(states.size()) + " states were given");
  }
  if (states.empty()) throw NumericError("no agents");
  const std::size_t d = states[0].dim();
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto& s = states[i];
    if (s.dim() != d || s.u.size() != d) {
      throw NumericError("agent " + std::to_string(i) + " has dimension " +
                         std::to_string(s.dim()) + ", expected " + std::to_string(d));
    }
    const auto nbrs = w.neighbors(i);
    if (s.x_hat.size() != nbrs.size()) {
      throw NumericError("agent " + std::to_string(i) + " holds public copies for the wrong neighbor set");
    }
    for (std::size_t j : nbrs) {
      const auto it = s.x_hat.find(j);
      if (it == s.x_hat.end() || it->second.size() != d) {
        throw NumericError("agent " + std::to_string(i) + " is missing the public copy of agent " +
                           std::to_string(j));
      }
    }
  }
}

}  // namespace detail

/// One synchronous SEND/RECEIVE of compressed differences.
///
/// Phase 1 compresses every agent's x_i - x_hat_i from the round-start
/// snapshot; phase 2 applies the messages to all public copies and forms
/// e_i = sum_j w_ij (x_hat_j - x_hat_i). Private values are left untouched.
inline Exchange exchange_public_copies(std::span<GossipAgentState> states, const MixingMatrix& w,
                                       const CompressorSpec& compressor) {
  detail::check_round_inputs(states, w);
  const std::size_t n = states.size();
  const std::size_t d = states[0].dim();

  std::vector<CompressedPayload> messages;
  messages.reserve(n);
  Exchange ex;
  ex.bytes_sent.resize(n);
  std::vector<double> diff(d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& own = states[i].x_hat.at(i);
    for (std::size_t k = 0; k < d; ++k) diff[k] = states[i].x[k] - own[k];
    messages.push_back(compress(compressor, diff));
    ex.bytes_sent[i] = payload_bytes(messages.back()) * w.out_degree(i);
  }

  ex.gossip_error.assign(n, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = states[i];
    for (std::size_t j : w.neighbors(i)) accumulate_decompressed(messages[j], s.x_hat.at(j));
    const auto& own = s.x_hat.at(i);
    auto& e = ex.gossip_error[i];
    for (std::size_t j : w.neighbors(i)) {
      if (j == i) continue;
      const double wij = w(i, j);
      const auto& other = s.x_hat.at(j);
      for (std::size_t k = 0; k < d; ++k) e[k] += wij * (other[k] - own[k]);
    }
  }
  return ex;
}

/// x += gamma * e
inline void apply_constant_step(std::span<double> x, std::span<const double> e, double gamma) {
  for (std::size_t k = 0; k < x.size(); ++k) x[k] += gamma * e[k];
}

/// u <- beta*u + (1-beta)*e^2, then x += gamma / (sqrt(u) + eps) * e.
/// No bias correction is applied to u.
inline void apply_adaptive_step(std::span<double> x, std::span<double> u, std::span<const double> e,
                                const GossipHyperParams& hp) {
  for (std::size_t k = 0; k < x.size(); ++k) {
    u[k] = hp.beta * u[k] + (1.0 - hp.beta) * (e[k] * e[k]);
    x[k] += hp.gamma / (std::sqrt(u[k]) + hp.epsilon) * e[k];
  }
}

/// CHOCO-Gossip with constant consensus step-size. Returns bytes sent per agent.
inline std::vector<std::uint64_t> choco_gossip_round(std::span<GossipAgentState> states,
                                                     const MixingMatrix& w,
                                                     const CompressorSpec& compressor,
                                                     double gamma) {
  GossipHyperParams{gamma, 0.0, 1.0}.validate();
  auto ex = exchange_public_copies(states, w, compressor);
  for (std::size_t i = 0; i < states.size(); ++i) {
    apply_constant_step(states[i].x, ex.gossip_error[i], gamma);
    ++states[i].round;
  }
  return std::move(ex.bytes_sent);
}

/// AdaGossip: CHOCO-Gossip exchange with an elementwise adaptive step.
inline std::vector<std::uint64_t> adagossip_round(std::span<GossipAgentState> states,
                                                  const MixingMatrix& w,
                                                  const CompressorSpec& compressor,
                                                  const GossipHyperParams& hp) {
  hp.validate();
  auto ex = exchange_public_copies(states, w, compressor);
  for (std::size_t i = 0; i < states.size(); ++i) {
    apply_adaptive_step(states[i].x, states[i].u, ex.gossip_error[i], hp);
    ++states[i].round;
  }
  return std::move(ex.bytes_sent);
}

/// Coordinate-wise mean of a set of equally sized vectors.
inline std::vector<double> coordinate_mean(std::span<const std::vector<double>> xs) {
  std::vector<double> mean(xs.empty() ? 0 : xs[0].size(), 0.0);
  for (const auto& x : xs)
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += x[k];
  for (double& m : mean) m /= static_cast<double>(xs.size());
  return mean;
}

/// (1/n) * sum_i ||x_i - mean||^2
inline double consensus_distance(std::span<const std::vector<double>> xs) {
  if (xs.empty()) return 0.0;
  const auto mean = coordinate_mean(xs);
  double total = 0.0;
  for (const auto& x : xs)
    for (std::size_t k = 0; k < mean.size(); ++k) total += (x[k] - mean[k]) * (x[k] - mean[k]);
  return total / static_cast<double>(xs.size());
}

inline std::vector<std::vector<double>> private_values(std::span<const GossipAgentState> states) {
  std::vector<std::vector<double>> xs;
  xs.reserve(states.size());
  for (const auto& s : states) xs.push_back(s.x);
  return xs;
}

inline double consensus_distance(std::span<const GossipAgentState> states) {
  const auto xs = private_values(states);
  return consensus_distance(std::span<const std::vector<double>>(xs));
}

enum class ConsensusEngine { choco, adagossip };

struct ConsensusSample {
  std::uint64_t round = 0;
  double distance = 0.0;
  std::uint64_t cumulative_bytes = 0;  // summed over all agents
};

/// Runs `rounds` gossip rounds from `initial` (public copies start at 0).
/// The series starts with the round-0 sample of the initial values.
inline std::vector<ConsensusSample> run_consensus(const std::vector<std::vector<double>>& initial,
                                                  const MixingMatrix& w,
                                                  const CompressorSpec& compressor,
                                                  ConsensusEngine engine,
                                                  const GossipHyperParams& hp,
                                                  std::uint64_t rounds) {
  if (rounds < 1) throw NumericError("run_consensus needs at least one round");
  hp.validate();
  auto states = make_gossip_states(initial, w);
  std::vector<ConsensusSample> series;
  series.reserve(rounds + 1);
  series.push_back({0, consensus_distance(std::span<const GossipAgentState>(states)), 0});
  std::uint64_t total = 0;
  for (std::uint64_t t = 1; t <= rounds; ++t) {
    const auto bytes = engine == ConsensusEngine::choco
                           ? choco_gossip_round(states, w, compressor, hp.gamma)
                           : adagossip_round(states, w, compressor, hp);
    for (auto b : bytes) total += b;
    series.push_back({t, consensus_distance(std::span<const GossipAgentState>(states)), total});
  }
  return series;
}

}  // namespace adagossip

#endif  // ADAGOSSIP_CONSENSUS_HPP_
