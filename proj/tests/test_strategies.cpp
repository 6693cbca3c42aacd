#include <gtest/gtest.h>

#include <memory>
#include <random>

#include "oneaudit/audit.hpp"
#include "oneaudit/strategies.hpp"
#include "support.hpp"

using namespace oneaudit;
using oneaudit::testing::rel_diff;

namespace {

std::shared_ptr<const PreparedStrategy> prepared(const BetStrategy& s, double eta) {
  return std::make_shared<const PreparedStrategy>(prepare(s, eta));
}

std::vector<BetStrategy> every_strategy(const std::vector<double>& alternative) {
  return {BetStrategy::fixed(1.1),
          BetStrategy::apriori_kelly(alternative),
          BetStrategy::oracle_kelly(alternative),
          BetStrategy::agrapa(),
          BetStrategy::universal_portfolio(100),
          BetStrategy::shrink_trunc(),
          BetStrategy::cobra()};
}

std::vector<double> random_values(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng) < 0.5 ? 0.5 : u(rng);
  return v;
}

}  // namespace

TEST(Agrapa, Examples) {
  EXPECT_EQ(agrapa_bet(0.45, 0.01, 0.45, 0.99), 0.0);
  EXPECT_NEAR(agrapa_bet(0.5, 0.0025, 0.45, 0.99), 2.2, 1e-12);
  EXPECT_EQ(agrapa_bet(0.40, 0.01, 0.45, 0.99), 0.0);
}

TEST(ShrinkTrunc, Examples) {
  ShrinkTruncParams p;
  p.d = 20.0;
  p.c = 0.025;
  p.eta0 = 0.5;
  EXPECT_NEAR(shrink_trunc_bet(0.0, 0, 0.45, p), (0.5 / 0.45 - 1.0) / 0.55, 1e-12);

  // Shrunk mean far below η: the floor η + c/√(d+n) keeps the bet positive.
  EXPECT_GT(shrink_trunc_bet(0.0, 200, 0.45, p), 0.0);

  p.c = 0.0;
  p.eta0 = 0.45;
  EXPECT_NEAR(shrink_trunc_bet(0.0, 0, 0.45, p), 0.0, 1e-15);
}

TEST(Cobra, Examples) {
  EXPECT_NEAR(cobra_bet(0.2, 0.0, 0.001), 2.2, 1e-9);
  EXPECT_EQ(cobra_bet(0.2, 0.0, 0.0), 1.0 / 0.45);
  EXPECT_EQ(cobra_bet(0.2, 0.0, 0.2), 0.0);
}

TEST(UniversalPortfolio, Examples) {
  EXPECT_DOUBLE_EQ(universal_portfolio_wealth(std::vector<double>{0.45}, 0.45, 37), 1.0);
  EXPECT_DOUBLE_EQ(universal_portfolio_wealth(std::vector<double>{1.0}, 0.5, 2), 1.75);
}

// Engine wealth with the mixture bet equals the average of the D fixed-bet
// TSMs, each run separately through tsm_step.
TEST(UniversalPortfolio, EngineEqualsAverageOfFixedBetTsms) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const auto draws = random_values(rng, 50);
    const double eta = 0.45;
    SequentialAudit audit(prepared(BetStrategy::universal_portfolio(100), eta), 1000,
                          SamplingMode::with_replacement, 1e-300, 1000);
    for (double x : draws) audit.step(x);

    double mixture = 0.0;
    for (double lambda : universal_portfolio_grid(eta, 100)) {
      TsmState s;
      for (double x : draws) s = tsm_step(s, x, lambda, eta);
      mixture += s.wealth;
    }
    mixture /= 100.0;
    EXPECT_LT(rel_diff(audit.state().wealth, mixture), 1e-9);
    EXPECT_LT(rel_diff(universal_portfolio_wealth(draws, eta, 100), mixture), 1e-9);
  }
}

// A bet never depends on the draw it is placed on: replaying a prefix and
// then diverging gives identical bets on the prefix.
TEST(Property, BetsArePredictable) {
  std::mt19937_64 rng(32);
  const auto alt = random_values(rng, 30);
  for (const auto& strategy : every_strategy(alt)) {
    for (auto mode : {SamplingMode::with_replacement, SamplingMode::without_replacement}) {
      const auto p = prepared(strategy, 0.45);
      const auto a = random_values(rng, 40);
      auto b = a;
      for (std::size_t i = 20; i < b.size(); ++i) b[i] = 1.0 - b[i];
      SequentialAudit ra(p, 200, mode, 1e-300, 200);
      SequentialAudit rb(p, 200, mode, 1e-300, 200);
      for (std::size_t i = 0; i < 20; ++i) {
        const double bet_a = ra.step(a[i]).bet;
        const double bet_b = rb.step(b[i]).bet;
        EXPECT_EQ(bet_a, bet_b) << strategy.name();
      }
    }
  }
}

// Exact one-step expectation of the wealth under a population whose mean is
// the null mean, by enumeration of every possible next draw.
TEST(Property, OneStepSupermartingaleByEnumeration) {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 40; ++trial) {
    auto pop = random_values(rng, 10 + rng() % 30);
    double eta = 0.0;
    for (double x : pop) eta += x;
    eta /= static_cast<double>(pop.size());
    if (!(eta > 0.05 && eta < 0.95)) continue;
    const auto alt = random_values(rng, 20);
    const auto strategies = every_strategy(alt);
    const auto& strategy = strategies[static_cast<std::size_t>(trial) % strategies.size()];
    if (strategy.kind == StrategyKind::fixed && 1.1 > 1.0 / eta) continue;
    SequentialAudit audit(prepared(strategy, eta), pop.size(), SamplingMode::with_replacement,
                          1e-300, 1000);
    const std::size_t prefix = rng() % 15;
    for (std::size_t i = 0; i < prefix; ++i) audit.step(pop[rng() % pop.size()]);
    const double expected = oneaudit::testing::expected_next_wealth(audit, pop);
    EXPECT_LT(rel_diff(expected, audit.state().wealth), 1e-12) << strategy.name();
  }
}

// The same identity without replacement, where the next draw is uniform over
// the undrawn cards and their mean is the tracked conditional null mean.
TEST(Property, OneStepSupermartingaleWithoutReplacement) {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 40; ++trial) {
    auto pop = random_values(rng, 10 + rng() % 30);
    double eta = 0.0;
    for (double x : pop) eta += x;
    eta /= static_cast<double>(pop.size());
    if (!(eta > 0.05 && eta < 0.95)) continue;
    const auto alt = random_values(rng, 20);
    const auto strategies = every_strategy(alt);
    const auto& strategy = strategies[static_cast<std::size_t>(trial) % strategies.size()];
    if (strategy.kind == StrategyKind::fixed && 1.1 > 1.0 / eta) continue;
    std::shuffle(pop.begin(), pop.end(), rng);
    SequentialAudit audit(prepared(strategy, eta), pop.size(), SamplingMode::without_replacement,
                          1e-300, 1000);
    const std::size_t prefix = rng() % (pop.size() / 2);
    for (std::size_t i = 0; i < prefix && audit.status() == AuditStatus::running; ++i) audit.step(pop[i]);
    if (audit.status() != AuditStatus::running) continue;
    const std::vector<double> rest(pop.begin() + static_cast<std::ptrdiff_t>(prefix), pop.end());
    const double expected = oneaudit::testing::expected_next_wealth(audit, rest);
    EXPECT_LT(rel_diff(expected, audit.state().wealth), 1e-12) << strategy.name();
  }
}

TEST(Prepare, Validation) {
  EXPECT_THROW(prepare(BetStrategy::fixed(3.0), 0.45), Error);
  EXPECT_THROW(prepare(BetStrategy::apriori_kelly({}), 0.45), Error);
  EXPECT_THROW(prepare(BetStrategy::agrapa(), 1.2), Error);
  EXPECT_EQ(parse_strategy_kind("universal_portfolio"), StrategyKind::universal_portfolio);
  EXPECT_THROW(parse_strategy_kind("martingale"), Error);
}
