#include "rodentsim/metrics.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

namespace rodentsim {
namespace {

using oracle::constant_session;
using oracle::session_from;

TEST(WindowedSeries, AllCorrect) {
  const auto s = constant_session(30, Outcome::correct);
  for (int delta : {1, 5, 30}) {
    const auto w = windowed_series(s, delta);
    EXPECT_EQ(w.values.size(), 30u - static_cast<std::size_t>(delta) + 1);
    for (double v : w.values)
      EXPECT_EQ(v, 1.0);
  }
}

TEST(WindowedSeries, HandCount) {
  const auto w = windowed_series(session_from("CCIC"), 2);
  EXPECT_EQ(w.values, (std::vector<double>{1.0, 0.5, 0.5}));
  EXPECT_EQ(w.window, 2);
  EXPECT_EQ(w.source_len, 4u);
}

TEST(WindowedSeries, WindowLongerThanSession) {
  EXPECT_TRUE(windowed_series(session_from("CIC"), 4).values.empty());
}

TEST(WindowedSeries, ZeroWindowThrows) {
  EXPECT_THROW(windowed_series(session_from("CIC"), 0), DomainError);
}

TEST(WindowedSeries, IncrementalMatchesRecountBitExact) {
  std::mt19937_64 gen(21);
  for (int rep = 0; rep < 500; ++rep) {
    const auto s = oracle::random_session(gen, 1, 250);
    const int delta = 1 + static_cast<int>(gen() % 30);
    const auto w = windowed_series(s, delta);
    const auto ref = oracle::windowed(s, delta, s.trials.size());
    ASSERT_EQ(w.values, ref);
    for (double v : w.values) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
      ASSERT_NEAR(v * delta, std::round(v * delta), 1e-9); // multiple of 1/delta
    }
  }
}

TEST(AccuracyCurve, Alternating) {
  const auto w = accuracy_curve(session_from("CICICICICI"), 2);
  for (double v : w.values)
    EXPECT_EQ(v, 0.5);
}

TEST(AccuracyCurve, UnitWindowIsIndicator) {
  const auto w = accuracy_curve(session_from("CIICC"), 1);
  EXPECT_EQ(w.values, (std::vector<double>{1, 0, 0, 1, 1}));
}

TEST(MatchDistance, Examples) {
  EXPECT_EQ(match_distance(0.5, 0.5), 0.0);
  EXPECT_EQ(match_distance(1.0, 0.0), 2.0);
  EXPECT_NEAR(match_distance(0.8, 0.6), 0.4, 1e-12);
}

TEST(MatchDistance, RejectsOutOfRange) {
  EXPECT_THROW(match_distance(-0.1, 0.5), DomainError);
  EXPECT_THROW(match_distance(0.5, 1.01), DomainError);
  EXPECT_THROW(match_distance(NAN, 0.5), DomainError);
}

TEST(MatchDistance, MetricAxioms) {
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 10000; ++rep) {
    const double p = u(gen), q = u(gen), r = u(gen);
    ASSERT_EQ(match_distance(p, q), match_distance(q, p));
    ASSERT_EQ(match_distance(p, p), 0.0);
    ASSERT_LE(match_distance(p, r), match_distance(p, q) + match_distance(q, r) + 1e-15);
    ASSERT_NEAR(match_distance(p, q), oracle::l1_two_point(p, q), 1e-15);
  }
}

TEST(IndividualDistance, SelfIsZero) {
  std::mt19937_64 gen(41);
  for (int rep = 0; rep < 50; ++rep) {
    const auto s = oracle::random_session(gen, 20, 200);
    EXPECT_EQ(individual_distance(s, s, 5), 0.0);
  }
}

TEST(IndividualDistance, Complementary) {
  const auto a = constant_session(40, Outcome::correct);
  const auto b = constant_session(50, Outcome::incorrect);
  for (int delta : {1, 7, 40})
    EXPECT_EQ(individual_distance(a, b, delta), 2.0);
}

TEST(IndividualDistance, HandWorkedPair) {
  // Windows: a = (1, 1/2, 1/2), b = (1/2, 0, 1/2); distances (1, 1, 0).
  EXPECT_NEAR(individual_distance(session_from("CCIC"), session_from("CIIC"), 2), 2.0 / 3.0, 1e-15);
}

TEST(IndividualDistance, TruncatesToShorter) {
  const auto a = session_from("CCCCIIII");
  const auto b = session_from("CCCC");
  EXPECT_EQ(individual_distance(a, b, 2), 0.0);
}

TEST(IndividualDistance, InsufficientData) {
  EXPECT_THROW(individual_distance(session_from("CC"), session_from("CCCC"), 3), InsufficientDataError);
}

TEST(IndividualDistance, MatchesBruteForce) {
  std::mt19937_64 gen(51);
  for (int rep = 0; rep < 300; ++rep) {
    const auto a = oracle::random_session(gen, 20, 200);
    const auto b = oracle::random_session(gen, 20, 200);
    for (int delta : {2, 5, 20})
      ASSERT_NEAR(individual_distance(a, b, delta), oracle::individual_distance(a, b, delta), 1e-12);
  }
}

TEST(IndividualDistance, DependsOnlyOnOutcomes) {
  // Swapping the spout mapping flips every response but keeps outcomes.
  std::mt19937_64 gen(61);
  for (int rep = 0; rep < 50; ++rep) {
    auto a = oracle::random_session(gen, 30, 80);
    auto b = oracle::random_session(gen, 30, 80);
    const double d = individual_distance(a, b, 5);
    for (auto *s : {&a, &b})
      for (auto &t : s->trials)
        if (t.response != Response::none)
          t.response = t.response == Response::left ? Response::right : Response::left;
    EXPECT_EQ(individual_distance(a, b, 5), d);
  }
}

TEST(GroupSeries, SingletonEqualsWindowed) {
  const auto s = session_from("CCIICICCCI");
  const std::vector<Session> g{s};
  EXPECT_EQ(group_series(g, 3).values, windowed_series(s, 3).values);
}

TEST(GroupSeries, ComplementaryPairAveragesToHalf) {
  const std::vector<Session> g{constant_session(20, Outcome::correct), constant_session(20, Outcome::incorrect)};
  for (double v : group_series(g, 4).values)
    EXPECT_EQ(v, 0.5);
}

TEST(GroupSeries, IdenticalMembers) {
  const auto s = session_from("CIICCICCIC");
  const std::vector<Session> g{s, s, s};
  const auto gs = group_series(g, 3);
  EXPECT_EQ(gs.values, windowed_series(s, 3).values);
  EXPECT_EQ(gs.group_size, 3u);
}

TEST(GroupSeries, MatchesPooledRecount) {
  std::mt19937_64 gen(71);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<Session> g;
    const std::size_t n = 1 + gen() % 6;
    for (std::size_t i = 0; i < n; ++i)
      g.push_back(oracle::random_session(gen, 20, 120));
    const int delta = 1 + static_cast<int>(gen() % 20);
    ASSERT_EQ(group_series(g, delta).values, oracle::group_windowed(g, delta));
  }
}

TEST(GroupSeries, EmptyGroupThrows) {
  EXPECT_THROW(group_series(std::vector<Session>{}, 2), DomainError);
}

TEST(GroupDistance, Examples) {
  const GroupSeries ones{{1, 1, 1}, 2, 1}, zeros{{0, 0, 0}, 2, 1};
  EXPECT_EQ(group_distance(ones, ones), 0.0);
  EXPECT_EQ(group_distance(ones, zeros), 2.0);
  EXPECT_NEAR(group_distance(GroupSeries{{0.8, 0.6}, 2, 1}, GroupSeries{{0.6, 0.6}, 2, 1}), 0.2, 1e-12);
}

TEST(GroupDistance, Errors) {
  const GroupSeries empty{{}, 2, 1}, some{{0.5}, 2, 1}, other_window{{0.5}, 3, 1};
  EXPECT_THROW(group_distance(empty, some), InsufficientDataError);
  EXPECT_THROW(group_distance(some, other_window), DomainError);
}

TEST(GroupDistance, SingletonReducesToIndividual) {
  std::mt19937_64 gen(81);
  for (int rep = 0; rep < 100; ++rep) {
    const auto a = oracle::random_session(gen, 20, 200);
    const auto b = oracle::random_session(gen, 20, 200);
    const int delta = 1 + static_cast<int>(gen() % 20);
    const std::vector<Session> ga{a}, gb{b};
    ASSERT_EQ(group_distance(group_series(ga, delta), group_series(gb, delta)), individual_distance(a, b, delta));
  }
}

TEST(DistanceMatrix, IdenticalPair) {
  const auto s = session_from("CCIC");
  const std::vector<LabeledSession> items{{{"a", 1, 1}, s}, {{"b", 1, 2}, s}};
  const auto m = distance_matrix(std::span<const LabeledSession>(items), 2);
  EXPECT_EQ(m.entries, (std::vector<double>{0, 0, 0, 0}));
}

TEST(DistanceMatrix, Pattern) {
  const auto c = constant_session(10, Outcome::correct);
  const auto i = constant_session(10, Outcome::incorrect);
  const std::vector<LabeledSession> items{{{"x", 1, 1}, c}, {{"x", 1, 2}, i}, {{"x", 1, 3}, c}};
  const auto m = distance_matrix(std::span<const LabeledSession>(items), 3);
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m.at(0, 1), 2.0);
  EXPECT_EQ(m.at(0, 2), 0.0);
  EXPECT_EQ(m.at(1, 2), 2.0);
  for (std::size_t k = 0; k < 3; ++k)
    EXPECT_EQ(m.at(k, k), 0.0);
}

TEST(DistanceMatrix, SymmetricAndBounded) {
  std::mt19937_64 gen(91);
  std::vector<LabeledSession> items;
  for (int e = 1; e <= 12; ++e)
    items.push_back({{"sim:exec-" + std::to_string(e), 1, e}, oracle::random_session(gen, 30, 150)});
  const auto m = distance_matrix(std::span<const LabeledSession>(items), 10);
  for (std::size_t a = 0; a < m.size(); ++a)
    for (std::size_t b = 0; b < m.size(); ++b) {
      EXPECT_NEAR(m.at(a, b), m.at(b, a), 1e-12);
      EXPECT_GE(m.at(a, b), 0.0);
      EXPECT_LE(m.at(a, b), 2.0);
    }
}

TEST(DistanceMatrix, ErrorsNameThePair) {
  const std::vector<LabeledSession> items{{{"long", 1, 1}, session_from("CCCCCC")},
                                          {{"short", 2, 1}, session_from("CC")}};
  try {
    distance_matrix(std::span<const LabeledSession>(items), 4);
    FAIL() << "expected InsufficientDataError";
  } catch (const InsufficientDataError &e) {
    EXPECT_NE(std::string(e.what()).find("short/s2/e1"), std::string::npos);
  }
  EXPECT_THROW(distance_matrix(std::span<const LabeledSession>(items.data(), 1), 1), DomainError);
}

TEST(DistanceMatrix, GroupItems) {
  const std::vector<LabeledGroup> items{{{"g", 1, 0}, {{1, 1}, 2, 5}},
                                        {{"g", 2, 0}, {{0.5, 0.5}, 2, 5}},
                                        {{"g", 3, 0}, {{0, 0}, 2, 5}}};
  const auto m = distance_matrix(std::span<const LabeledGroup>(items));
  EXPECT_EQ(m.at(0, 1), 1.0);
  EXPECT_EQ(m.at(0, 2), 2.0);
  EXPECT_EQ(m.at(2, 1), 1.0);
}

/// Alternative distance through the pluggable interface.
struct HalfL1 {
  static constexpr std::string_view name = "half-l1";
  double operator()(double p, double q) const { return std::abs(p - q); }
};

TEST(Distance, Pluggable) {
  EXPECT_NEAR(individual_distance(session_from("CCIC"), session_from("CIIC"), 2, HalfL1{}), 1.0 / 3.0, 1e-15);
}

} // namespace
} // namespace rodentsim
