#ifndef ADAGOSSIP_LEARNING_HPP_
#define ADAGOSSIP_LEARNING_HPP_

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adagossip/compression.hpp"
#include "adagossip/consensus.hpp"
#include "adagossip/errors.hpp"
#include "adagossip/models_data.hpp"
#include "adagossip/topology.hpp"

namespace adagossip {

struct OptimizerConfig {
  double lr0 = 0.1;
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 1;

  void validate() const {
    if (!(lr0 > 0.0)) throw NumericError("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw NumericError("momentum must lie in [0,1)");
    if (!(weight_decay >= 0.0)) throw NumericError("weight decay must be non-negative");
    if (batch_size < 1) throw NumericError("batch size must be positive");
    if (epochs < 1) throw NumericError("epochs must be positive");
  }
};

/// Step decay by 10x once half and again once three quarters of the epochs
/// have elapsed.
inline double lr_schedule(const OptimizerConfig& cfg, std::size_t epoch) {
  if (epoch >= cfg.epochs) {
    throw NumericError("epoch " + std::to_string(epoch) + " outside schedule of " +
                       std::to_string(cfg.epochs) + " epochs");
  }
  const double e = static_cast<double>(epoch);
  const double total = static_cast<double>(cfg.epochs);
  if (e < 0.5 * total) return cfg.lr0;
  if (e < 0.75 * total) return cfg.lr0 / 10.0;
  return cfg.lr0 / 100.0;
}

/// One agent of a decentralized training run. `gossip.x` is the parameter
/// vector; the momentum buffer is never communicated.
struct LearnerState {
  GossipAgentState gossip;
  std::vector<double> momentum_buf;
  std::vector<double> deepsqueeze_residual;

  std::vector<double>& params() { return gossip.x; }
  const std::vector<double>& params() const { return gossip.x; }
  std::size_t id() const { return gossip.id; }
};

/// Every agent starts from the same parameters with zeroed buffers.
inline std::vector<LearnerState> make_learner_states(const std::vector<double>& x0,
                                                     const MixingMatrix& w) {
  std::vector<LearnerState> states(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    states[i].gossip = make_gossip_state(i, x0, w);
    states[i].momentum_buf.assign(x0.size(), 0.0);
    states[i].deepsqueeze_residual.assign(x0.size(), 0.0);
  }
  return states;
}

/// SGD with coupled weight decay and (optionally Nesterov) momentum:
/// g = grad + wd*x; buf = m*buf + g; x -= lr * (nesterov ? g + m*buf : buf).
inline void local_sgd_step(LearnerState& state, std::span<const double> grad, double lr,
                           const OptimizerConfig& cfg) {
  auto& x = state.params();
  if (grad.size() != x.size()) {
    throw NumericError("agent " + std::to_string(state.id()) + ": gradient has " +
                       std::to_string(grad.size()) + " entries, parameters have " +
                       std::to_string(x.size()));
  }
  for (std::size_t k = 0; k < grad.size(); ++k) {
    if (!std::isfinite(grad[k])) {
      throw NumericError("agent " + std::to_string(state.id()) + ", step " +
                         std::to_string(state.gossip.round) + ": non-finite gradient at index " +
                         std::to_string(k));
    }
  }
  auto& buf = state.momentum_buf;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double g = grad[k] + cfg.weight_decay * x[k];
    buf[k] = cfg.momentum * buf[k] + g;
    const double step = cfg.nesterov ? g + cfg.momentum * buf[k] : buf[k];
    x[k] -= lr * step;
  }
}

/// Callable returning agent i's stochastic gradient at the given parameters.
template <class F>
concept GradientOracle = requires(F f, std::size_t agent, std::span<const double> x) {
  { f(agent, x) } -> std::convertible_to<std::vector<double>>;
};

namespace detail {

inline void check_gamma(double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw NumericError("consensus step-size gamma must lie in (0,1], got " + std::to_string(gamma));
  }
}

inline void check_learners(std::span<const LearnerState> states, const MixingMatrix& w) {
  if (states.size() != w.size()) {
    throw NumericError("mixing matrix has " + std::to_string(w.size()) + " agents but " +
                       std::to_string(states.size()) + " learners were given");
  }
  const std::size_t d = states.empty() ? 0 : states[0].params().size();
  for (const auto& s : states) {
    if (s.params().size() != d || s.momentum_buf.size() != d || s.deepsqueeze_residual.size() != d) {
      throw NumericError("agent " + std::to_string(s.id()) + " has mismatched state dimensions");
    }
  }
}

// Gradients are all taken at the round-start parameters before any agent moves.
template <GradientOracle Grad>
void local_steps(std::span<LearnerState> states, Grad& grad_fn, double lr, const OptimizerConfig& cfg) {
  std::vector<std::vector<double>> grads;
  grads.reserve(states.size());
  for (auto& s : states) grads.push_back(grad_fn(s.id(), std::span<const double>(s.params())));
  for (std::size_t i = 0; i < states.size(); ++i) local_sgd_step(states[i], grads[i], lr, cfg);
}

// x_i <- x_i + gamma * sum_j w_ij (m_j - m_i) for messages m.
inline void mix_messages(std::span<LearnerState> states, const MixingMatrix& w,
                         const std::vector<std::vector<double>>& messages, double gamma) {
  const std::size_t d = messages.empty() ? 0 : messages[0].size();
  std::vector<double> e(d);
  for (std::size_t i = 0; i < states.size(); ++i) {
    std::fill(e.begin(), e.end(), 0.0);
    for (std::size_t j : w.neighbors(i)) {
      if (j == i) continue;
      const double wij = w(i, j);
      for (std::size_t k = 0; k < d; ++k) e[k] += wij * (messages[j][k] - messages[i][k]);
    }
    apply_constant_step(states[i].params(), e, gamma);
  }
}

inline void advance_round(std::span<LearnerState> states) {
  for (auto& s : states) ++s.gossip.round;
}

// Runs the compressed exchange on the learners' gossip states, then applies
// `step(gossip_state, gossip_error)` per agent.
template <class Step>
std::vector<std::uint64_t> exchange_and_step(std::span<LearnerState> states, const MixingMatrix& w,
                                             const CompressorSpec& compressor, Step&& step) {
  std::vector<GossipAgentState> gossip;
  gossip.reserve(states.size());
  for (auto& s : states) gossip.push_back(std::move(s.gossip));
  auto restore = [&] {
    for (std::size_t i = 0; i < states.size(); ++i) states[i].gossip = std::move(gossip[i]);
  };
  Exchange ex;
  try {
    ex = exchange_public_copies(gossip, w, compressor);
  } catch (...) {
    restore();
    throw;
  }
  for (std::size_t i = 0; i < states.size(); ++i) step(gossip[i], ex.gossip_error[i]);
  restore();
  return std::move(ex.bytes_sent);
}

}  // namespace detail

/// DSGD: local step, full-precision exchange of x^{t+1/2}, constant-gamma gossip.
template <GradientOracle Grad>
std::vector<std::uint64_t> dsgd_round(std::span<LearnerState> states, const MixingMatrix& w,
                                      double gamma, Grad&& grad_fn, double lr,
                                      const OptimizerConfig& cfg) {
  detail::check_gamma(gamma);
  detail::check_learners(states, w);
  detail::local_steps(states, grad_fn, lr, cfg);
  std::vector<std::vector<double>> half;
  half.reserve(states.size());
  for (const auto& s : states) half.push_back(s.params());
  detail::mix_messages(states, w, half, gamma);
  detail::advance_round(states);
  std::vector<std::uint64_t> bytes(states.size());
  const std::size_t d = states.empty() ? 0 : states[0].params().size();
  for (std::size_t i = 0; i < states.size(); ++i) bytes[i] = 4ull * d * w.out_degree(i);
  return bytes;
}

/// DeepSqueeze: agents exchange C[x^{t+1/2} + residual]; the compression
/// error becomes the residual of the next round.
template <GradientOracle Grad>
std::vector<std::uint64_t> deepsqueeze_round(std::span<LearnerState> states, const MixingMatrix& w,
                                             const CompressorSpec& compressor, double gamma,
                                             Grad&& grad_fn, double lr, const OptimizerConfig& cfg) {
  detail::check_gamma(gamma);
  detail::check_learners(states, w);
  detail::local_steps(states, grad_fn, lr, cfg);
  const std::size_t d = states.empty() ? 0 : states[0].params().size();
  std::vector<std::vector<double>> sent;
  sent.reserve(states.size());
  std::vector<std::uint64_t> bytes(states.size());
  std::vector<double> v(d);
  for (std::size_t i = 0; i < states.size(); ++i) {
    auto& s = states[i];
    for (std::size_t k = 0; k < d; ++k) v[k] = s.params()[k] + s.deepsqueeze_residual[k];
    const auto payload = compress(compressor, v);
    bytes[i] = payload_bytes(payload) * w.out_degree(i);
    sent.push_back(decompress(payload));
    for (std::size_t k = 0; k < d; ++k) s.deepsqueeze_residual[k] = v[k] - sent.back()[k];
  }
  detail::mix_messages(states, w, sent, gamma);
  detail::advance_round(states);
  return bytes;
}

/// CHOCO-SGD: CHOCO-Gossip with constant gamma applied to x^{t+1/2}.
template <GradientOracle Grad>
std::vector<std::uint64_t> choco_sgd_round(std::span<LearnerState> states, const MixingMatrix& w,
                                           const CompressorSpec& compressor, double gamma,
                                           Grad&& grad_fn, double lr, const OptimizerConfig& cfg) {
  detail::check_gamma(gamma);
  detail::check_learners(states, w);
  detail::local_steps(states, grad_fn, lr, cfg);
  auto bytes = detail::exchange_and_step(states, w, compressor, [gamma](GossipAgentState& g, const std::vector<double>& e) {
    apply_constant_step(g.x, e, gamma);
  });
  detail::advance_round(states);
  return bytes;
}

/// AdaG-SGD: CHOCO exchange of x^{t+1/2} followed by the adaptive step
/// gamma / (sqrt(u) + eps) applied elementwise to the gossip-error.
template <GradientOracle Grad>
std::vector<std::uint64_t> adag_sgd_round(std::span<LearnerState> states, const MixingMatrix& w,
                                          const CompressorSpec& compressor,
                                          const GossipHyperParams& hp, Grad&& grad_fn, double lr,
                                          const OptimizerConfig& cfg) {
  hp.validate();
  detail::check_learners(states, w);
  detail::local_steps(states, grad_fn, lr, cfg);
  auto bytes = detail::exchange_and_step(states, w, compressor, [&hp](GossipAgentState& g, const std::vector<double>& e) {
    apply_adaptive_step(g.x, g.u, e, hp);
  });
  detail::advance_round(states);
  return bytes;
}

enum class Algorithm { dsgd, deepsqueeze, choco, adag };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::dsgd: return "dsgd";
    case Algorithm::deepsqueeze: return "deepsqueeze";
    case Algorithm::choco: return "choco";
    case Algorithm::adag: return "adag";
  }
  return "?";
}

/// Dispatches one training round of the selected algorithm.
template <GradientOracle Grad>
std::vector<std::uint64_t> training_round(Algorithm algorithm, std::span<LearnerState> states,
                                          const MixingMatrix& w, const CompressorSpec& compressor,
                                          const GossipHyperParams& hp, Grad&& grad_fn, double lr,
                                          const OptimizerConfig& cfg) {
  switch (algorithm) {
    case Algorithm::dsgd: return dsgd_round(states, w, hp.gamma, grad_fn, lr, cfg);
    case Algorithm::deepsqueeze:
      return deepsqueeze_round(states, w, compressor, hp.gamma, grad_fn, lr, cfg);
    case Algorithm::choco: return choco_sgd_round(states, w, compressor, hp.gamma, grad_fn, lr, cfg);
    case Algorithm::adag: return adag_sgd_round(states, w, compressor, hp, grad_fn, lr, cfg);
  }
  throw ConfigError("unknown algorithm");
}

inline std::vector<std::vector<double>> parameters_of(std::span<const LearnerState> states) {
  std::vector<std::vector<double>> xs;
  xs.reserve(states.size());
  for (const auto& s : states) xs.push_back(s.params());
  return xs;
}

/// Coordinate-wise average of all agents' parameters.
inline std::vector<double> consensus_model(std::span<const LearnerState> states) {
  const auto xs = parameters_of(states);
  return coordinate_mean(xs);
}

/// Evaluates the averaged model on `test`.
inline Evaluation evaluate_consensus_model(std::span<const LearnerState> states,
                                           const ModelSpec& model, const Dataset& test) {
  return evaluate(model, consensus_model(states), test);
}

}  // namespace adagossip

#endif  // ADAGOSSIP_LEARNING_HPP_
