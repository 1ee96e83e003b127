#pragma once

#include "rodentsim/core.hpp"
#include "rodentsim/random.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace rodentsim {

/// How the first k-1 stimuli of a training are handled before a full state exists.
enum class WarmupMode {
  prefill, ///< fill the window with k copies of the first stimulus; act from trial 1
  await,   ///< record response=none until k stimuli have been seen
};

constexpr std::string_view to_string(WarmupMode m) noexcept {
  return m == WarmupMode::prefill ? "prefill" : "await";
}

struct AgentConfig {
  int k = 3;
  double alpha = 0.2;
  double gamma = 1.0;
  double eps_start = 0.8;
  double eps_decay_rate = 0.025;
  double q_init = 0.0;
  WarmupMode warmup = WarmupMode::prefill;

  friend bool operator==(const AgentConfig &, const AgentConfig &) = default;
};

/// Largest supported window; keeps the dense table at 4^k rows.
inline constexpr int kMaxWindow = 10;

inline void validate(const AgentConfig &c) {
  if (c.k < 1 || c.k > kMaxWindow)
    throw DomainError("agent.k must be in [1, " + std::to_string(kMaxWindow) + "]");
  if (!(c.alpha > 0.0 && c.alpha <= 1.0))
    throw DomainError("agent.alpha must be in (0, 1]");
  if (!(c.gamma >= 0.0 && c.gamma <= 1.0))
    throw DomainError("agent.gamma must be in [0, 1]");
  if (!(c.eps_start >= 0.0 && c.eps_start <= 1.0))
    throw DomainError("agent.eps_start must be in [0, 1]");
  if (!std::isfinite(c.eps_decay_rate) || !std::isfinite(c.q_init))
    throw DomainError("agent.eps_decay_rate and agent.q_init must be finite");
}

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

/// The last k stimuli, most recent last.
class State {
public:
  State() = default;
  explicit State(std::vector<Stimulus> window) : window_(std::move(window)) {}

  static State filled(int k, Stimulus s) { return State(std::vector<Stimulus>(static_cast<std::size_t>(k), s)); }

  std::size_t size() const noexcept { return window_.size(); }
  const std::vector<Stimulus> &window() const noexcept { return window_; }

  /// Base-4 row index; the oldest stimulus is the most significant digit.
  std::size_t code() const noexcept {
    std::size_t c = 0;
    for (auto s : window_)
      c = c * 4 + index_of(s);
    return c;
  }

  static State decode(std::size_t code, int k) {
    std::vector<Stimulus> w(static_cast<std::size_t>(k));
    for (int i = k - 1; i >= 0; --i) {
      w[static_cast<std::size_t>(i)] = kAllStimuli[code % 4];
      code /= 4;
    }
    return State(std::move(w));
  }

  friend bool operator==(const State &, const State &) = default;

private:
  std::vector<Stimulus> window_;
};

/// Drops the oldest stimulus and appends `s`.
inline State push_stimulus(const State &state, Stimulus s) {
  auto w = state.window();
  if (w.empty())
    return State({s});
  std::rotate(w.begin(), w.begin() + 1, w.end());
  w.back() = s;
  return State(std::move(w));
}

// ---------------------------------------------------------------------------
// Q-table
// ---------------------------------------------------------------------------

using QRow = std::array<double, 3>;

/// Dense table over all 4^k states; unvisited rows hold q_init.
class QTable {
public:
  explicit QTable(int k = 3, double q_init = 0.0)
      : k_(k), q_init_(q_init), rows_(row_count(k), QRow{q_init, q_init, q_init}) {}

  int k() const noexcept { return k_; }
  double q_init() const noexcept { return q_init_; }
  std::size_t size() const noexcept { return rows_.size(); }

  const QRow &row(const State &s) const { return rows_.at(checked_code(s)); }
  QRow &row(const State &s) { return rows_.at(checked_code(s)); }
  const QRow &row(std::size_t code) const { return rows_.at(code); }
  QRow &row(std::size_t code) { return rows_.at(code); }

  double value(const State &s, Action a) const { return row(s)[index_of(a)]; }
  double &value(const State &s, Action a) { return row(s)[index_of(a)]; }

  friend bool operator==(const QTable &, const QTable &) = default;

private:
  static std::size_t row_count(int k) {
    if (k < 1 || k > kMaxWindow)
      throw DomainError("Q-table window must be in [1, " + std::to_string(kMaxWindow) + "]");
    std::size_t n = 1;
    for (int i = 0; i < k; ++i)
      n *= 4;
    return n;
  }

  std::size_t checked_code(const State &s) const {
    if (static_cast<int>(s.size()) != k_)
      throw DomainError("state length " + std::to_string(s.size()) + " does not match k=" +
                        std::to_string(k_));
    return s.code();
  }

  int k_;
  double q_init_;
  std::vector<QRow> rows_;
};

// ---------------------------------------------------------------------------
// Policy pieces
// ---------------------------------------------------------------------------

/// Exploration probability at the start of session j, clamped to [0, 1].
inline double epsilon_for_session(int j, const AgentConfig &c) {
  if (j < 1)
    throw DomainError("epsilon_for_session: session index must be >= 1");
  const double raw = c.eps_start + std::exp(-c.eps_decay_rate * static_cast<double>(j)) - 1.0;
  return std::clamp(raw, 0.0, 1.0);
}

/// Softmax over the three action values.
inline std::array<double, 3> action_distribution(const QRow &q) {
  for (double v : q)
    if (!std::isfinite(v))
      throw DomainError("action_distribution: non-finite action value");
  const double top = std::max({q[0], q[1], q[2]});
  std::array<double, 3> p{};
  double total = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    p[i] = std::exp(q[i] - top);
    total += p[i];
  }
  for (auto &v : p)
    v /= total;
  return p;
}

/// ε-greedy with softmax exploitation.
inline Action select_action(const State &state, double eps, const QTable &qtable, Rng &rng) {
  if (!(eps >= 0.0 && eps <= 1.0))
    throw DomainError("select_action: eps must be in [0, 1]");
  if (rng.bernoulli(eps))
    return kAllActions[rng.uniform_index(kAllActions.size())];
  const auto p = action_distribution(qtable.row(state));
  const double u = rng.uniform01();
  double cum = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    cum += p[i];
    if (u < cum)
      return kAllActions[i];
  }
  return kAllActions[2];
}

/// One-step Q-learning update. `next` empty marks the terminal trial of an
/// episode, whose target is the reward alone. Returns the new q(s, a).
inline double q_update(QTable &qtable, const State &s, Action a, double reward,
                       const std::optional<State> &next, const AgentConfig &c) {
  const double max_next = next ? std::max({qtable.row(*next)[0], qtable.row(*next)[1],
                                           qtable.row(*next)[2]})
                               : 0.0;
  double &q = qtable.value(s, a);
  q = q + c.alpha * (reward + c.gamma * max_next - q);
  assert(std::isfinite(q));
  return q;
}

inline double q_update(QTable &qtable, const State &s, Action a, double reward, const State &next,
                       const AgentConfig &c) {
  return q_update(qtable, s, a, reward, std::optional<State>(next), c);
}

// ---------------------------------------------------------------------------
// Agent
// ---------------------------------------------------------------------------

/// The artificial rodent: Q-table plus the sliding stimulus window. Both
/// persist across sessions; only ε is set per session by the caller.
class Agent {
public:
  explicit Agent(AgentConfig config = {})
      : config_((validate(config), config)), qtable_(config.k, config.q_init) {}

  const AgentConfig &config() const noexcept { return config_; }
  const QTable &qtable() const noexcept { return qtable_; }
  QTable &qtable() noexcept { return qtable_; }

  /// Feeds the stimulus of the current trial into the window.
  void observe(Stimulus s) {
    if (window_.size() == 0 && config_.warmup == WarmupMode::prefill) {
      window_ = State::filled(config_.k, s);
      return;
    }
    if (static_cast<int>(window_.size()) < config_.k) {
      auto w = window_.window();
      w.push_back(s);
      window_ = State(std::move(w));
      return;
    }
    window_ = push_stimulus(window_, s);
  }

  /// True once the window holds k stimuli.
  bool ready() const noexcept { return static_cast<int>(window_.size()) == config_.k; }

  const State &state() const noexcept { return window_; }

  Action act(double eps, Rng &rng) const { return select_action(window_, eps, qtable_, rng); }

  /// State that follows the current one once `s` is observed.
  State peek(Stimulus s) const { return push_stimulus(window_, s); }

  double learn(Action a, double reward, const std::optional<State> &next) {
    return q_update(qtable_, window_, a, reward, next, config_);
  }

private:
  AgentConfig config_;
  QTable qtable_;
  State window_;
};

} // namespace rodentsim
