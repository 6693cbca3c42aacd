#include <gtest/gtest.h>

#include <random>

#include "oneaudit/assorter.hpp"
#include "support.hpp"

using namespace oneaudit;
using oneaudit::testing::mvr_mean;
using oneaudit::testing::random_small_election;

TEST(Plurality, VoteValues) {
  const auto a = plurality_assorter();
  EXPECT_EQ(a(Vote::winner), 1.0);
  EXPECT_EQ(a(Vote::loser), 0.0);
  EXPECT_EQ(a(Vote::other), 0.5);
  EXPECT_EQ(a.upper_bound, 1.0);
}

TEST(Plurality, ParseVote) {
  EXPECT_EQ(parse_vote("winner"), Vote::winner);
  EXPECT_EQ(parse_vote("l"), Vote::loser);
  EXPECT_EQ(parse_vote("other"), Vote::other);
  try {
    parse_vote("maybe");
    FAIL() << "expected InvalidVote";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidVote);
  }
}

TEST(ReportedMargin, Examples) {
  EXPECT_DOUBLE_EQ(reported_margin(ReferenceValueSet::from_values({1.0, 1.0, 1.0})), 1.0);
  EXPECT_NEAR(reported_margin(ReferenceValueSet::from_values({1.0, 1.0, 1.0, 0.0, 0.0})), 0.2, 1e-15);
  try {
    reported_margin(ReferenceValueSet::from_values({1.0, 0.0}));
    FAIL() << "expected NonPositiveMargin";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonPositiveMargin);
  }
}

TEST(References, BatchMeanAndLinkedCards) {
  std::vector<CardRecord> cards;
  BatchCvrs batches;
  for (int i = 0; i < 1000; ++i) {
    const Vote v = i < 600 ? Vote::winner : Vote::loser;
    cards.push_back(CardRecord::in_batch("b" + std::to_string(i), "big", v));
    batches["big"].push_back(v);
  }
  cards.push_back(CardRecord::linked("linked", Vote::winner));
  cards.push_back(CardRecord::in_batch("solo", "single", Vote::loser));
  batches["single"].push_back(Vote::loser);

  const auto refs = oneaudit_references(cards, batches, plurality_assorter());
  for (int i = 0; i < 1000; ++i) EXPECT_DOUBLE_EQ(refs.values[static_cast<std::size_t>(i)], 0.6);
  EXPECT_EQ(refs.values[1000], 1.0);
  EXPECT_EQ(refs.values[1001], 0.0);
}

TEST(References, MissingBatchIsEmptyBatch) {
  std::vector<CardRecord> cards{CardRecord::in_batch("x", "ghost", Vote::winner)};
  try {
    oneaudit_references(cards, {}, plurality_assorter());
    FAIL() << "expected EmptyBatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyBatch);
  }
}

TEST(Overstatement, Examples) {
  EXPECT_NEAR(overstatement_assort(0.3, 0.3, 1.0, 0.2), 1.0 / 1.8, 1e-15);
  EXPECT_NEAR(overstatement_assort(1.0, 1.0, 1.0, 0.2), 1.0 / 1.8, 1e-15);
  EXPECT_EQ(overstatement_assort(1.0, 0.0, 1.0, 0.2), 0.0);
  EXPECT_NEAR(overstatement_assort(0.0, 1.0, 1.0, 0.2), 2.0 / 1.8, 1e-15);
}

TEST(Rescale, CorrectCvrValueMapsToOneHalf) {
  for (double v : {0.01, 0.2, 0.37, 0.5, 0.99, 1.0}) {
    AssorterPopulation raw;
    raw.values = {1.0 / (2.0 - v), 0.0};
    raw.null_mean = 0.5;
    raw.upper_bound = rescale_factor(1.0, v);
    const auto out = rescale(raw, 1.0, v);
    // x / (2/(2 - v)) with x = 1/(2 - v) is 1/2 up to the last bit of the division.
    EXPECT_DOUBLE_EQ(out.values[0], 0.5) << "v=" << v;
    EXPECT_EQ(out.values[1], 0.0);
    EXPECT_DOUBLE_EQ(rescaled_overstatement(0.7, 0.7, 1.0), 0.5);
  }
  EXPECT_DOUBLE_EQ(rescaled_null_mean(1.0, 0.2), 0.45);
}

TEST(Rescale, RejectsValuesAboveTheBound) {
  AssorterPopulation raw;
  raw.values = {1.2};
  EXPECT_THROW(rescale(raw, 1.0, 0.2), Error);
}

// Property: mean of rescaled overstatements exceeds η iff the MVR mean exceeds 1/2.
TEST(Property, EquivalenceOnRandomSmallElections) {
  std::mt19937_64 rng(11);
  int checked = 0;
  while (checked < 500) {
    const std::size_t n = 1 + rng() % 50;
    auto e = random_small_election(rng, n, 0.3);
    const auto refs = oneaudit_references(e.cards, e.batch_cvrs, plurality_assorter());
    const double v = 2.0 * refs.reported_mean - 1.0;
    const double am = mvr_mean(e.mvrs);
    if (!(v > 0.0) || am == 0.5) continue;
    std::vector<double> mvr_values;
    for (Vote m : e.mvrs) mvr_values.push_back(plurality_assorter()(m));
    const auto pop = rescaled_population(refs.values, mvr_values, 1.0, v);
    const double gap = pop.mean() - pop.null_mean;
    EXPECT_EQ(gap > 0.0, am > 0.5) << "n=" << n << " gap=" << gap << " am=" << am;
    ++checked;
  }
}

TEST(Property, RangeOfRawAndRescaledValues) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    auto e = random_small_election(rng, 1 + rng() % 50, 0.5);
    const auto refs = oneaudit_references(e.cards, e.batch_cvrs, plurality_assorter());
    const double v = 2.0 * refs.reported_mean - 1.0;
    if (!(v > 0.0)) continue;
    std::vector<double> mvr_values;
    for (Vote m : e.mvrs) mvr_values.push_back(plurality_assorter()(m));
    const auto raw = overstatement_population(refs.values, mvr_values, 1.0, v);
    for (double x : raw.values) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, rescale_factor(1.0, v) * (1.0 + 1e-15));
    }
    for (double x : rescale(raw, 1.0, v).values) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
    }
  }
}

TEST(Property, BatchMeanIsOneHalfWithoutErrors) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t size = 1 + rng() % 2000;
    std::vector<Vote> cvrs;
    for (std::size_t i = 0; i < size; ++i) cvrs.push_back(oneaudit::testing::random_vote(rng, 0.55, 0.1));
    std::vector<Vote> mvrs = cvrs;
    std::shuffle(mvrs.begin(), mvrs.end(), rng);
    std::vector<CardRecord> cards;
    for (std::size_t i = 0; i < size; ++i) cards.push_back(CardRecord::in_batch(std::to_string(i), "b", cvrs[i]));
    const auto refs = oneaudit_references(cards, BatchCvrs{{"b", cvrs}}, plurality_assorter());
    double total = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
      total += rescaled_overstatement(refs.values[i], plurality_assorter()(mvrs[i]), 1.0);
    }
    EXPECT_NEAR(total / static_cast<double>(size), 0.5, 1e-12);
  }
}

TEST(Property, AccurateLinkedCvrsGiveExactlyOneHalf) {
  std::mt19937_64 rng(14);
  std::vector<CardRecord> cards;
  std::vector<double> mvr_values;
  for (int i = 0; i < 500; ++i) {
    const Vote v = oneaudit::testing::random_vote(rng, 0.6, 0.1);
    cards.push_back(CardRecord::linked(std::to_string(i), v));
    mvr_values.push_back(plurality_assorter()(v));
  }
  const auto refs = oneaudit_references(cards, {}, plurality_assorter());
  const auto pop = rescaled_population(refs.values, mvr_values, 1.0, 2.0 * refs.reported_mean - 1.0);
  for (double x : pop.values) EXPECT_EQ(x, 0.5);
}
