#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rodentsim {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Precondition violated on a value passed to a pure function.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Not enough trials for the requested window.
struct InsufficientDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The run-length constraint cannot be met with the active stimulus set.
struct InfeasibleConstraintError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Trial atoms
// ---------------------------------------------------------------------------

enum class Stimulus { sweet, sweet_55, salt_55, salt };
enum class Category { sweet, salt };
enum class Response { left, right, none };
enum class Outcome { correct, incorrect };

/// Actions share their carrier with responses.
using Action = Response;

inline constexpr std::array<Stimulus, 4> kAllStimuli = {
    Stimulus::sweet, Stimulus::sweet_55, Stimulus::salt_55, Stimulus::salt};
inline constexpr std::array<Response, 3> kAllResponses = {
    Response::left, Response::right, Response::none};
inline constexpr std::array<Action, 3> kAllActions = kAllResponses;

constexpr Category category(Stimulus s) noexcept {
  switch (s) {
  case Stimulus::sweet:
  case Stimulus::sweet_55:
    return Category::sweet;
  case Stimulus::salt_55:
  case Stimulus::salt:
    return Category::salt;
  }
  return Category::salt;
}

constexpr std::size_t index_of(Stimulus s) noexcept { return static_cast<std::size_t>(s); }
constexpr std::size_t index_of(Response r) noexcept { return static_cast<std::size_t>(r); }

constexpr std::string_view to_string(Stimulus s) noexcept {
  switch (s) {
  case Stimulus::sweet:
    return "sweet";
  case Stimulus::sweet_55:
    return "sweet_55";
  case Stimulus::salt_55:
    return "salt_55";
  case Stimulus::salt:
    return "salt";
  }
  return "?";
}

constexpr std::string_view to_string(Response r) noexcept {
  switch (r) {
  case Response::left:
    return "left";
  case Response::right:
    return "right";
  case Response::none:
    return "none";
  }
  return "?";
}

constexpr std::string_view to_string(Outcome o) noexcept {
  return o == Outcome::correct ? "correct" : "incorrect";
}

inline std::optional<Stimulus> parse_stimulus(std::string_view s) noexcept {
  for (auto v : kAllStimuli)
    if (to_string(v) == s)
      return v;
  return std::nullopt;
}

inline std::optional<Response> parse_response(std::string_view s) noexcept {
  for (auto v : kAllResponses)
    if (to_string(v) == s)
      return v;
  return std::nullopt;
}

inline std::optional<Outcome> parse_outcome(std::string_view s) noexcept {
  if (s == "correct")
    return Outcome::correct;
  if (s == "incorrect")
    return Outcome::incorrect;
  return std::nullopt;
}

struct Trial {
  Stimulus stimulus = Stimulus::sweet;
  Response response = Response::none;
  Outcome outcome = Outcome::incorrect;

  friend bool operator==(const Trial &, const Trial &) = default;
};

/// One episode of contiguous trials. `index` is the 1-based session number.
struct Session {
  int index = 1;
  std::vector<Trial> trials;

  friend bool operator==(const Session &, const Session &) = default;
};

struct TrainingSequence {
  std::string individual_id;
  std::vector<Session> sessions;
  bool trained = false;
  std::optional<int> sessions_to_criterion;

  friend bool operator==(const TrainingSequence &, const TrainingSequence &) = default;
};

struct Cohort {
  std::vector<TrainingSequence> members;

  friend bool operator==(const Cohort &, const Cohort &) = default;
};

/// Prefixes that keep imported and simulated individuals apart in mixed cohorts.
inline constexpr std::string_view kRealPrefix = "real:";
inline constexpr std::string_view kSimPrefix = "sim:";

// ---------------------------------------------------------------------------
// Success rule
// ---------------------------------------------------------------------------

struct SuccessCriterion {
  double threshold = 0.70;
  int window = 3;
};

inline double accuracy(const Session &session) {
  if (session.trials.empty())
    throw DomainError("accuracy: session " + std::to_string(session.index) + " has no trials");
  std::size_t correct = 0;
  for (const auto &t : session.trials)
    correct += t.outcome == Outcome::correct;
  return static_cast<double>(correct) / static_cast<double>(session.trials.size());
}

/// 0-based position ending the first run of `criterion.window` consecutive
/// accuracies at or above the threshold.
inline std::optional<std::size_t> first_success(std::span<const double> accuracies,
                                                SuccessCriterion criterion = {}) {
  if (criterion.window < 1)
    throw DomainError("success window must be >= 1");
  int run = 0;
  for (std::size_t i = 0; i < accuracies.size(); ++i) {
    run = accuracies[i] >= criterion.threshold ? run + 1 : 0;
    if (run >= criterion.window)
      return i;
  }
  return std::nullopt;
}

inline bool check_success(std::span<const double> accuracies, SuccessCriterion criterion = {}) {
  return first_success(accuracies, criterion).has_value();
}

inline std::vector<double> session_accuracies(const TrainingSequence &seq) {
  std::vector<double> out;
  out.reserve(seq.sessions.size());
  for (const auto &s : seq.sessions)
    out.push_back(accuracy(s));
  return out;
}

/// Recomputes `trained` and `sessions_to_criterion` from the session accuracies.
inline void evaluate_success(TrainingSequence &seq, SuccessCriterion criterion = {}) {
  const auto acc = session_accuracies(seq);
  const auto hit = first_success(acc, criterion);
  seq.trained = hit.has_value();
  seq.sessions_to_criterion.reset();
  if (hit)
    seq.sessions_to_criterion = seq.sessions[*hit].index;
}

/// Throws DomainError when session indices are not 1..n or a session is empty.
inline void validate(const TrainingSequence &seq) {
  for (std::size_t i = 0; i < seq.sessions.size(); ++i) {
    const auto &s = seq.sessions[i];
    if (s.index != static_cast<int>(i) + 1)
      throw DomainError("individual '" + seq.individual_id + "': expected session index " +
                        std::to_string(i + 1) + ", found " + std::to_string(s.index));
    if (s.trials.empty())
      throw DomainError("individual '" + seq.individual_id + "': session " +
                        std::to_string(s.index) + " has no trials");
  }
  if (!seq.trained && seq.sessions_to_criterion)
    throw DomainError("individual '" + seq.individual_id +
                      "': sessions_to_criterion set on an untrained sequence");
}

} // namespace rodentsim
