#pragma once

#include "rodentsim/core.hpp"
#include "rodentsim/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rodentsim {

// ---------------------------------------------------------------------------
// Series types
// ---------------------------------------------------------------------------

/// Fraction of correct outcomes in each length-`window` sliding window.
struct WindowedSeries {
  std::vector<double> values;
  int window = 1;
  std::size_t source_len = 0;

  friend bool operator==(const WindowedSeries &, const WindowedSeries &) = default;
};

/// Sliding-window correct fraction pooled over a group of N sessions.
struct GroupSeries {
  std::vector<double> values;
  int window = 1;
  std::size_t group_size = 0;

  friend bool operator==(const GroupSeries &, const GroupSeries &) = default;
};

// ---------------------------------------------------------------------------
// Distances between two-point pmfs (correct, incorrect)
// ---------------------------------------------------------------------------

template <class D>
concept TwoPointDistance = requires(const D d, double p, double q) {
  { d(p, q) } -> std::convertible_to<double>;
  { D::name } -> std::convertible_to<std::string_view>;
};

inline void check_fraction(double p, const char *what) {
  if (!(p >= 0.0 && p <= 1.0))
    throw DomainError(std::string(what) + ": probability " + std::to_string(p) + " outside [0, 1]");
}

/// L1 distance over the shared domain {correct, incorrect}.
struct MatchDistance {
  static constexpr std::string_view name = "match";

  double operator()(double p, double q) const {
    check_fraction(p, "match_distance");
    check_fraction(q, "match_distance");
    const std::array<double, 2> pmf_p{p, 1.0 - p};
    const std::array<double, 2> pmf_q{q, 1.0 - q};
    double sum = 0.0;
    for (std::size_t i = 0; i < pmf_p.size(); ++i)
      sum += std::abs(pmf_p[i] - pmf_q[i]);
    return sum;
  }
};

inline double match_distance(double p, double q) { return MatchDistance{}(p, q); }

// ---------------------------------------------------------------------------
// Windowed series
// ---------------------------------------------------------------------------

namespace detail {

/// Correct counts for every window over the first `len` outcomes, via a
/// running sum.
inline std::vector<int> window_counts(std::span<const Trial> trials, int delta) {
  if (delta < 1)
    throw DomainError("window length must be >= 1");
  const auto d = static_cast<std::size_t>(delta);
  std::vector<int> counts;
  if (trials.size() < d)
    return counts;
  counts.reserve(trials.size() - d + 1);
  int c = 0;
  for (std::size_t i = 0; i < d; ++i)
    c += trials[i].outcome == Outcome::correct;
  counts.push_back(c);
  for (std::size_t t = d; t < trials.size(); ++t) {
    c += (trials[t].outcome == Outcome::correct) - (trials[t - d].outcome == Outcome::correct);
    counts.push_back(c);
  }
  return counts;
}

template <TwoPointDistance D>
double mean_distance(std::span<const double> a, std::span<const double> b, std::size_t n, const D &dist) {
  double sum = 0.0;
  for (std::size_t t = 0; t < n; ++t)
    sum += dist(a[t], b[t]);
  return sum / static_cast<double>(n);
}

} // namespace detail

inline WindowedSeries windowed_series(std::span<const Trial> trials, int delta) {
  const auto counts = detail::window_counts(trials, delta);
  WindowedSeries out{{}, delta, trials.size()};
  out.values.reserve(counts.size());
  for (int c : counts)
    out.values.push_back(static_cast<double>(c) / static_cast<double>(delta));
  return out;
}

inline WindowedSeries windowed_series(const Session &session, int delta) {
  return windowed_series(std::span<const Trial>(session.trials), delta);
}

/// Sliding mean accuracy, for plotting.
inline WindowedSeries accuracy_curve(const Session &session, int delta) {
  return windowed_series(session, delta);
}

// ---------------------------------------------------------------------------
// Individual distance
// ---------------------------------------------------------------------------

/// Mean distance between the aligned windowed series of two sessions,
/// truncated to the shorter session.
template <TwoPointDistance D = MatchDistance>
double individual_distance(const Session &a, const Session &b, int delta, const D &dist = {}) {
  if (delta < 1)
    throw DomainError("window length must be >= 1");
  const std::size_t len = std::min(a.trials.size(), b.trials.size());
  if (len < static_cast<std::size_t>(delta))
    throw InsufficientDataError("individual_distance: shortest session has " + std::to_string(len) +
                                " trials, fewer than window " + std::to_string(delta));
  const auto sa = windowed_series(std::span<const Trial>(a.trials).first(len), delta);
  const auto sb = windowed_series(std::span<const Trial>(b.trials).first(len), delta);
  return detail::mean_distance(sa.values, sb.values, sa.values.size(), dist);
}

// ---------------------------------------------------------------------------
// Group series and distance
// ---------------------------------------------------------------------------

/// Pools N sessions (same session index) into one sliding-window mean,
/// truncated to the shortest member.
inline GroupSeries group_series(std::span<const Session> sessions, int delta) {
  if (sessions.empty())
    throw DomainError("group_series: empty group");
  if (delta < 1)
    throw DomainError("window length must be >= 1");
  std::size_t len = sessions.front().trials.size();
  for (const auto &s : sessions)
    len = std::min(len, s.trials.size());
  if (len < static_cast<std::size_t>(delta))
    throw InsufficientDataError("group_series: shortest member has " + std::to_string(len) +
                                " trials, fewer than window " + std::to_string(delta));

  std::vector<long> totals(len - static_cast<std::size_t>(delta) + 1, 0);
  for (const auto &s : sessions) {
    const auto counts = detail::window_counts(std::span<const Trial>(s.trials).first(len), delta);
    for (std::size_t t = 0; t < totals.size(); ++t)
      totals[t] += counts[t];
  }
  GroupSeries out{{}, delta, sessions.size()};
  out.values.reserve(totals.size());
  const double norm = static_cast<double>(sessions.size()) * static_cast<double>(delta);
  for (long c : totals)
    out.values.push_back(static_cast<double>(c) / norm);
  return out;
}

template <TwoPointDistance D = MatchDistance>
double group_distance(const GroupSeries &gi, const GroupSeries &gj, const D &dist = {}) {
  if (gi.values.empty() || gj.values.empty())
    throw InsufficientDataError("group_distance: empty series");
  if (gi.window != gj.window)
    throw DomainError("group_distance: window lengths differ (" + std::to_string(gi.window) + " vs " +
                      std::to_string(gj.window) + ")");
  const std::size_t n = std::min(gi.values.size(), gj.values.size());
  return detail::mean_distance(gi.values, gj.values, n, dist);
}

// ---------------------------------------------------------------------------
// Distance matrices
// ---------------------------------------------------------------------------

struct ItemLabel {
  std::string individual_id;
  int session_index = 0;
  int execution_index = 0;

  friend bool operator==(const ItemLabel &, const ItemLabel &) = default;
};

inline std::string to_string(const ItemLabel &l) {
  return l.individual_id + "/s" + std::to_string(l.session_index) + "/e" + std::to_string(l.execution_index);
}

/// Square, symmetric, zero-diagonal matrix of pairwise distances.
struct DistanceMatrix {
  std::vector<ItemLabel> labels;
  std::vector<double> entries; // row-major, labels.size()^2

  std::size_t size() const noexcept { return labels.size(); }
  double at(std::size_t i, std::size_t j) const { return entries.at(i * size() + j); }
  double &at(std::size_t i, std::size_t j) { return entries.at(i * size() + j); }

  friend bool operator==(const DistanceMatrix &, const DistanceMatrix &) = default;
};

struct LabeledSession {
  ItemLabel label;
  Session session;
};

struct LabeledGroup {
  ItemLabel label;
  GroupSeries series;
};

namespace detail {

template <class PairFn>
DistanceMatrix pairwise(std::vector<ItemLabel> labels, PairFn &&fn) {
  const std::size_t n = labels.size();
  if (n < 2)
    throw DomainError("distance_matrix: need at least 2 items, got " + std::to_string(n));
  DistanceMatrix m{std::move(labels), std::vector<double>(n * n, 0.0)};
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      try {
        const double d = fn(i, j);
        m.entries[i * n + j] = d;
        m.entries[j * n + i] = d;
      } catch (const InsufficientDataError &e) {
        throw InsufficientDataError("distance_matrix: pair (" + to_string(m.labels[i]) + ", " +
                                    to_string(m.labels[j]) + "): " + e.what());
      }
    }
  });
  return m;
}

} // namespace detail

template <TwoPointDistance D = MatchDistance>
DistanceMatrix distance_matrix(std::span<const LabeledSession> items, int delta, const D &dist = {}) {
  std::vector<ItemLabel> labels;
  for (const auto &it : items)
    labels.push_back(it.label);
  return detail::pairwise(std::move(labels), [&](std::size_t i, std::size_t j) {
    return individual_distance(items[i].session, items[j].session, delta, dist);
  });
}

template <TwoPointDistance D = MatchDistance>
DistanceMatrix distance_matrix(std::span<const LabeledGroup> items, const D &dist = {}) {
  std::vector<ItemLabel> labels;
  for (const auto &it : items)
    labels.push_back(it.label);
  return detail::pairwise(std::move(labels), [&](std::size_t i, std::size_t j) {
    return group_distance(items[i].series, items[j].series, dist);
  });
}

} // namespace rodentsim
