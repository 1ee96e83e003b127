#include "rodentsim/agent.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace rodentsim {
namespace {

// Values below come from direct evaluation of 0.8 + exp(-0.025 j) - 1 and
// of the softmax in double precision (python3 -c "import math; ...").
constexpr double kEpsilonAt1 = 0.7753099120283327;
constexpr double kEpsilonAt200Raw = -0.19326205300091448;
constexpr double kSoftmaxTop = 0.5761168847658291;  // e / (e + 2)
constexpr double kSoftmaxRest = 0.21194155761708547; // 1 / (e + 2)

TEST(Epsilon, FirstSession) {
  EXPECT_NEAR(epsilon_for_session(1, {}), kEpsilonAt1, 1e-12);
}

TEST(Epsilon, ClampedAtZeroLate) {
  AgentConfig c;
  EXPECT_LT(c.eps_start + std::exp(-c.eps_decay_rate * 200) - 1.0, 0.0);
  EXPECT_NEAR(c.eps_start + std::exp(-c.eps_decay_rate * 200) - 1.0, kEpsilonAt200Raw, 1e-12);
  EXPECT_EQ(epsilon_for_session(200, c), 0.0);
}

TEST(Epsilon, FullStartReducesToDecay) {
  AgentConfig c;
  c.eps_start = 1.0;
  for (int j = 1; j <= 500; ++j) {
    const double e = epsilon_for_session(j, c);
    EXPECT_NEAR(e, std::exp(-0.025 * j), 1e-15);
    EXPECT_GT(e, 0.0);
    EXPECT_LT(e, 1.0);
  }
}

TEST(Epsilon, NonIncreasingAndZeroAfterCrossing) {
  AgentConfig c;
  const double crossing = std::log(1.0 / (1.0 - c.eps_start)) / c.eps_decay_rate; // ~64.38
  double prev = 1.0;
  for (int j = 1; j <= 500; ++j) {
    const double e = epsilon_for_session(j, c);
    EXPECT_LE(e, prev);
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 1.0);
    if (j >= crossing) {
      EXPECT_EQ(e, 0.0) << "j=" << j;
    }
    prev = e;
  }
  EXPECT_GT(epsilon_for_session(64, c), 0.0);
  EXPECT_EQ(epsilon_for_session(65, c), 0.0);
}

TEST(Epsilon, RejectsSessionZero) { EXPECT_THROW(epsilon_for_session(0, {}), DomainError); }

TEST(Softmax, UniformAtEqualValues) {
  const auto p = action_distribution({0, 0, 0});
  for (double v : p)
    EXPECT_NEAR(v, 1.0 / 3.0, 1e-12);
}

TEST(Softmax, OneHotBump) {
  const auto p = action_distribution({1, 0, 0});
  EXPECT_NEAR(p[0], kSoftmaxTop, 1e-12);
  EXPECT_NEAR(p[1], kSoftmaxRest, 1e-12);
  EXPECT_NEAR(p[2], kSoftmaxRest, 1e-12);
}

TEST(Softmax, ShiftInvarianceAndValidPmf) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int rep = 0; rep < 5000; ++rep) {
    const QRow q{u(gen), u(gen), u(gen)};
    const double c = u(gen) * 10;
    const auto p = action_distribution(q);
    const auto ps = action_distribution({q[0] + c, q[1] + c, q[2] + c});
    double sum = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_GE(p[i], 0.0);
      EXPECT_NEAR(p[i], ps[i], 1e-12);
      sum += p[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Softmax, LargeValuesDoNotOverflow) {
  const auto p = action_distribution({1000.0, 999.0, 999.0});
  EXPECT_NEAR(p[0], kSoftmaxTop, 1e-12);
}

TEST(Softmax, RejectsNonFinite) {
  EXPECT_THROW(action_distribution({NAN, 0, 0}), DomainError);
  EXPECT_THROW(action_distribution({INFINITY, 0, 0}), DomainError);
}

TEST(SelectAction, FullExplorationIsUniform) {
  QTable q;
  q.row(State::filled(3, Stimulus::sweet)) = {10, 0, 0};
  Rng rng(42);
  std::array<int, 3> counts{};
  const int n = 100000;
  for (int i = 0; i < n; ++i)
    ++counts[index_of(select_action(State::filled(3, Stimulus::sweet), 1.0, q, rng))];
  for (int c : counts)
    EXPECT_NEAR(static_cast<double>(c) / n, 1.0 / 3.0, 0.01);
}

TEST(SelectAction, GreedySoftmaxFollowsLargeValue) {
  QTable q;
  const auto s = State::filled(3, Stimulus::salt);
  q.row(s) = {10, 0, 0};
  Rng rng(43);
  int left = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i)
    left += select_action(s, 0.0, q, rng) == Action::left;
  EXPECT_GE(static_cast<double>(left) / n, 0.99);
}

TEST(SelectAction, DeterministicForSeed) {
  QTable q;
  const auto s = State::filled(3, Stimulus::sweet_55);
  q.row(s) = {0.3, -0.2, 0.1};
  Rng a(99), b(99);
  for (int i = 0; i < 1000; ++i)
    ASSERT_EQ(select_action(s, 0.5, q, a), select_action(s, 0.5, q, b));
}

TEST(SelectAction, RejectsBadEpsilon) {
  QTable q;
  Rng rng(1);
  EXPECT_THROW(select_action(State::filled(3, Stimulus::sweet), 1.5, q, rng), DomainError);
}

TEST(QUpdate, FromZeroWithReward) {
  QTable q;
  AgentConfig c;
  const auto s = State::filled(3, Stimulus::sweet);
  const auto s2 = State::filled(3, Stimulus::salt);
  EXPECT_EQ(q_update(q, s, Action::left, +1.0, s2, c), 0.2);
}

TEST(QUpdate, PenaltyCancels) {
  QTable q;
  AgentConfig c;
  const auto s = State::filled(3, Stimulus::sweet);
  const auto s2 = State::filled(3, Stimulus::salt);
  q.value(s, Action::left) = 0.2;
  q.value(s2, Action::right) = 0.2;
  EXPECT_EQ(q_update(q, s, Action::left, -1.0, s2, c), 0.0);
}

TEST(QUpdate, ZeroLearningRateKeepsValue) {
  // alpha = 0 is outside the agent's validated range but the rule itself is total.
  QTable q;
  AgentConfig c;
  c.alpha = 0.0;
  const auto s = State::filled(3, Stimulus::sweet);
  q.value(s, Action::none) = 0.7;
  EXPECT_EQ(q_update(q, s, Action::none, 1.0, State::filled(3, Stimulus::salt), c), 0.7);
}

TEST(QUpdate, TerminalUsesRewardOnly) {
  QTable q;
  AgentConfig c;
  const auto s = State::filled(3, Stimulus::sweet);
  q.value(s, Action::left) = 0.5;
  EXPECT_DOUBLE_EQ(q_update(q, s, Action::left, 1.0, std::nullopt, c), 0.5 + 0.2 * (1.0 - 0.5));
}

TEST(QUpdate, TouchesExactlyOneEntryAndFollowsRecurrence) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-3, 3);
  AgentConfig c;
  QTable q;
  for (std::size_t code = 0; code < q.size(); ++code)
    q.row(code) = {u(gen), u(gen), u(gen)};
  for (int rep = 0; rep < 2000; ++rep) {
    const auto s = State::decode(gen() % q.size(), 3);
    const auto s2 = State::decode(gen() % q.size(), 3);
    const auto a = kAllActions[gen() % 3];
    const double r = (gen() & 1) ? 1.0 : -1.0;
    const QTable before = q;
    const double old = before.value(s, a);
    const auto &next = before.row(s2);
    const double expected = old + c.alpha * (r + c.gamma * std::max({next[0], next[1], next[2]}) - old);
    EXPECT_EQ(q_update(q, s, a, r, s2, c), expected);
    for (std::size_t code = 0; code < q.size(); ++code)
      for (std::size_t i = 0; i < 3; ++i) {
        if (code == s.code() && i == index_of(a))
          continue;
        ASSERT_EQ(q.row(code)[i], before.row(code)[i]);
      }
  }
}

TEST(State, PushShiftsWindow) {
  const State s({Stimulus::sweet, Stimulus::salt, Stimulus::sweet});
  EXPECT_EQ(push_stimulus(s, Stimulus::salt), State({Stimulus::salt, Stimulus::sweet, Stimulus::salt}));
}

TEST(State, PushSaturates) {
  State s({Stimulus::sweet, Stimulus::salt_55, Stimulus::sweet_55});
  for (int i = 0; i < 3; ++i)
    s = push_stimulus(s, Stimulus::salt);
  EXPECT_EQ(s, State::filled(3, Stimulus::salt));
}

TEST(State, WindowOfOne) {
  EXPECT_EQ(push_stimulus(State({Stimulus::sweet}), Stimulus::salt_55), State({Stimulus::salt_55}));
}

TEST(State, CodesCoverTable) {
  for (int k = 1; k <= 4; ++k) {
    QTable q(k);
    EXPECT_EQ(q.size(), static_cast<std::size_t>(std::pow(4, k)));
    for (std::size_t code = 0; code < q.size(); ++code)
      EXPECT_EQ(State::decode(code, k).code(), code);
  }
}

TEST(QTable, DefaultFilledAndShapeChecked) {
  QTable q(3, -0.5);
  EXPECT_EQ(q.value(State::filled(3, Stimulus::salt), Action::right), -0.5);
  EXPECT_THROW(q.row(State::filled(2, Stimulus::salt)), DomainError);
}

TEST(AgentConfig, Validation) {
  AgentConfig c;
  EXPECT_NO_THROW(validate(c));
  c.alpha = 0;
  EXPECT_THROW(validate(c), DomainError);
  c = {};
  c.gamma = 1.5;
  EXPECT_THROW(validate(c), DomainError);
  c = {};
  c.k = 0;
  EXPECT_THROW(validate(c), DomainError);
}

TEST(Agent, PrefillActsImmediately) {
  Agent agent;
  agent.observe(Stimulus::salt);
  EXPECT_TRUE(agent.ready());
  EXPECT_EQ(agent.state(), State::filled(3, Stimulus::salt));
}

TEST(Agent, AwaitNeedsKStimuli) {
  AgentConfig c;
  c.warmup = WarmupMode::await;
  Agent agent(c);
  agent.observe(Stimulus::salt);
  EXPECT_FALSE(agent.ready());
  agent.observe(Stimulus::sweet);
  EXPECT_FALSE(agent.ready());
  agent.observe(Stimulus::sweet_55);
  ASSERT_TRUE(agent.ready());
  EXPECT_EQ(agent.state(), State({Stimulus::salt, Stimulus::sweet, Stimulus::sweet_55}));
  agent.observe(Stimulus::salt_55);
  EXPECT_EQ(agent.state(), State({Stimulus::sweet, Stimulus::sweet_55, Stimulus::salt_55}));
}

TEST(Agent, SameSeedSameActions) {
  const std::vector<Stimulus> stimuli = {Stimulus::sweet, Stimulus::salt, Stimulus::salt,
                                         Stimulus::sweet_55, Stimulus::salt_55, Stimulus::sweet};
  auto run = [&] {
    Agent agent;
    Rng rng(2024);
    std::vector<Action> out;
    for (int rep = 0; rep < 50; ++rep)
      for (auto s : stimuli) {
        agent.observe(s);
        const auto a = agent.act(0.3, rng);
        agent.learn(a, a == Action::left ? 1.0 : -1.0, agent.peek(Stimulus::salt));
        out.push_back(a);
      }
    return out;
  };
  EXPECT_EQ(run(), run());
}

} // namespace
} // namespace rodentsim
