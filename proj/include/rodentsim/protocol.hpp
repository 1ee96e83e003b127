#pragma once

#include "rodentsim/agent.hpp"
#include "rodentsim/core.hpp"
#include "rodentsim/random.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rodentsim {

/// When mixtures join the stimulus set.
enum class PhaseSwitch {
  on_session_accuracy, ///< after the first session at or above success_threshold
  never,               ///< phase_stimuli stay fixed for the whole training
};

constexpr std::string_view to_string(PhaseSwitch p) noexcept {
  return p == PhaseSwitch::on_session_accuracy ? "session_accuracy" : "never";
}

struct ProtocolConfig {
  int max_run_length = 3;
  int trials_per_session = 150;
  std::vector<Stimulus> phase_stimuli = {Stimulus::sweet, Stimulus::salt};
  Response sweet_target = Response::left;
  PhaseSwitch phase_switch = PhaseSwitch::on_session_accuracy;
  double success_threshold = 0.70;
  int success_window = 3;
  int max_sessions = 100;

  SuccessCriterion criterion() const { return {success_threshold, success_window}; }

  friend bool operator==(const ProtocolConfig &, const ProtocolConfig &) = default;
};

inline void validate(const ProtocolConfig &c) {
  if (c.max_run_length < 1)
    throw DomainError("protocol.max_run_length must be >= 1");
  if (c.trials_per_session < 1)
    throw DomainError("protocol.trials_per_session must be >= 1");
  if (c.phase_stimuli.empty())
    throw DomainError("protocol.phase_stimuli must not be empty");
  for (std::size_t i = 0; i < c.phase_stimuli.size(); ++i)
    for (std::size_t j = i + 1; j < c.phase_stimuli.size(); ++j)
      if (c.phase_stimuli[i] == c.phase_stimuli[j])
        throw DomainError("protocol.phase_stimuli contains a duplicate");
  if (c.sweet_target == Response::none)
    throw DomainError("protocol.sweet_target must be left or right");
  if (!(c.success_threshold >= 0.0 && c.success_threshold <= 1.0))
    throw DomainError("protocol.success_threshold must be in [0, 1]");
  if (c.success_window < 1)
    throw DomainError("protocol.success_window must be >= 1");
  if (c.max_sessions < 1)
    throw DomainError("protocol.max_sessions must be >= 1");
}

// ---------------------------------------------------------------------------
// Stimulus sequences
// ---------------------------------------------------------------------------

/// Uniform draws over `stimuli`, except that after `max_run_length` identical
/// stimuli the next draw is uniform over the others.
inline std::vector<Stimulus> generate_stimulus_sequence(std::span<const Stimulus> stimuli,
                                                        int max_run_length, int length, Rng &rng) {
  if (length < 1)
    throw DomainError("stimulus sequence length must be >= 1");
  if (stimuli.empty())
    throw DomainError("stimulus set must not be empty");
  if (max_run_length < 1)
    throw DomainError("max_run_length must be >= 1");
  if (stimuli.size() < 2 && length > max_run_length)
    throw InfeasibleConstraintError("cannot generate " + std::to_string(length) +
                                    " stimuli from a single stimulus with runs capped at " +
                                    std::to_string(max_run_length));

  std::vector<Stimulus> out;
  out.reserve(static_cast<std::size_t>(length));
  int run = 0;
  for (int i = 0; i < length; ++i) {
    Stimulus next;
    if (run >= max_run_length) {
      const std::size_t pick = rng.uniform_index(stimuli.size() - 1);
      const auto pos = static_cast<std::size_t>(std::find(stimuli.begin(), stimuli.end(), out.back()) - stimuli.begin());
      next = stimuli[pick < pos ? pick : pick + 1];
    } else {
      next = stimuli[rng.uniform_index(stimuli.size())];
    }
    run = (!out.empty() && out.back() == next) ? run + 1 : 1;
    out.push_back(next);
  }
  return out;
}

inline std::vector<Stimulus> generate_stimulus_sequence(const ProtocolConfig &config, int length,
                                                        Rng &rng) {
  return generate_stimulus_sequence(config.phase_stimuli, config.max_run_length, length, rng);
}

// ---------------------------------------------------------------------------
// Judging
// ---------------------------------------------------------------------------

constexpr Response opposite(Response r) noexcept {
  return r == Response::left ? Response::right : Response::left;
}

/// Rewarded spout for a stimulus.
constexpr Response target_spout(Stimulus s, Response sweet_target) noexcept {
  return category(s) == Category::sweet ? sweet_target : opposite(sweet_target);
}

/// A non-response is never rewarded.
constexpr Outcome judge(Stimulus s, Response r, Response sweet_target) noexcept {
  return (r != Response::none && r == target_spout(s, sweet_target)) ? Outcome::correct
                                                                      : Outcome::incorrect;
}

inline Outcome judge(Stimulus s, Response r, const ProtocolConfig &config) {
  return judge(s, r, config.sweet_target);
}

constexpr double reward_for(Outcome o) noexcept { return o == Outcome::correct ? 1.0 : -1.0; }

// ---------------------------------------------------------------------------
// Sessions and trainings
// ---------------------------------------------------------------------------

/// Runs one episode over `stimuli` at exploration `eps`. The last trial of the
/// session is terminal for the Q-update.
inline Session run_session_on(Agent &agent, const ProtocolConfig &config, int session_index,
                              std::span<const Stimulus> stimuli, double eps, Rng &rng) {
  if (session_index < 1)
    throw DomainError("session index must be >= 1");
  Session session{session_index, {}};
  session.trials.reserve(stimuli.size());
  for (std::size_t t = 0; t < stimuli.size(); ++t) {
    const Stimulus s = stimuli[t];
    agent.observe(s);
    if (!agent.ready()) {
      session.trials.push_back({s, Response::none, judge(s, Response::none, config)});
      continue;
    }
    const Action a = agent.act(eps, rng);
    const Outcome o = judge(s, a, config);
    session.trials.push_back({s, a, o});
    std::optional<State> next;
    if (t + 1 < stimuli.size())
      next = agent.peek(stimuli[t + 1]);
    agent.learn(a, reward_for(o), next);
  }
  return session;
}

inline Session run_session_with(Agent &agent, const ProtocolConfig &config, int session_index,
                                std::span<const Stimulus> active, double eps, Rng &rng) {
  const auto stimuli =
      generate_stimulus_sequence(active, config.max_run_length, config.trials_per_session, rng);
  return run_session_on(agent, config, session_index, stimuli, eps, rng);
}

/// One session over config.phase_stimuli at ε(session_index).
inline Session run_session(Agent &agent, const ProtocolConfig &config, int session_index, Rng &rng) {
  validate(config);
  if (session_index < 1)
    throw DomainError("session index must be >= 1");
  return run_session_with(agent, config, session_index, config.phase_stimuli,
                          epsilon_for_session(session_index, agent.config()), rng);
}

struct TrainingOptions {
  /// Run exactly this many sessions instead of stopping at success or max_sessions.
  std::optional<int> fixed_sessions;
  /// With fixed_sessions, still stop at the first success.
  bool stop_on_success = false;
};

inline std::string simulated_id(std::uint64_t seed) { return std::string(kSimPrefix) + "seed-" + std::to_string(seed); }

/// Trains `agent` session by session. Without fixed_sessions, stops at the
/// first success or at max_sessions. With fixed_sessions, continues past
/// success with ε frozen at the value of the session that met the criterion.
inline TrainingSequence train(Agent &agent, const ProtocolConfig &config, std::uint64_t seed,
                              const TrainingOptions &options = {}) {
  validate(config);
  if (options.fixed_sessions && *options.fixed_sessions < 1)
    throw DomainError("fixed session count must be >= 1");

  const AgentConfig &agent_config = agent.config();
  Rng rng(seed);
  TrainingSequence seq;
  seq.individual_id = simulated_id(seed);

  std::vector<Stimulus> active = config.phase_stimuli;
  std::vector<double> accuracies;
  std::optional<double> frozen_eps;
  const bool fixed = options.fixed_sessions.has_value();
  const int limit = fixed ? *options.fixed_sessions : config.max_sessions;

  for (int j = 1; j <= limit; ++j) {
    const double eps = frozen_eps ? *frozen_eps : epsilon_for_session(j, agent_config);
    seq.sessions.push_back(run_session_with(agent, config, j, active, eps, rng));
    const double acc = accuracy(seq.sessions.back());
    accuracies.push_back(acc);

    if (config.phase_switch == PhaseSwitch::on_session_accuracy && acc >= config.success_threshold &&
        active.size() < kAllStimuli.size())
      active.assign(kAllStimuli.begin(), kAllStimuli.end());

    if (!frozen_eps && check_success(accuracies, config.criterion())) {
      if (!fixed || options.stop_on_success)
        break;
      frozen_eps = epsilon_for_session(j, agent_config);
    }
  }
  evaluate_success(seq, config.criterion());
  return seq;
}

inline TrainingSequence run_training(const ProtocolConfig &config, const AgentConfig &agent_config,
                                     std::uint64_t seed, const TrainingOptions &options = {}) {
  Agent agent(agent_config);
  return train(agent, config, seed, options);
}

} // namespace rodentsim
