#include <gtest/gtest.h>

#include <fstream>

#include "oneaudit/io.hpp"
#include "support.hpp"

using namespace oneaudit;
using oneaudit::testing::TempDir;

namespace {

PopulationSpec spec() {
  PopulationSpec s;
  s.reported_mean = 0.58;
  s.across_gap = 0.2;
  s.within_gap = 0.1;
  s.n_cvr = 300;
  s.n_batch_cards = 400;
  s.batch_size = 100;
  s.error_model = ErrorModel::halve_margin;
  s.seed = 17;
  return s;
}

}  // namespace

TEST(Csv, SplitAndFormat) {
  EXPECT_EQ(csv::split("a,,b"), (std::vector<std::string>{"a", "", "b"}));
  EXPECT_EQ(csv::parse_double(csv::format_double(0.1 + 0.2), "x"), 0.1 + 0.2);
  EXPECT_THROW(csv::parse_double("0.5x", "here"), Error);
}

TEST(Population, RoundTrip) {
  TempDir dir("pop");
  const auto e = build_population(spec());
  write_population_csv(e.population, dir.path / "p.csv");
  const auto back = read_population_csv(dir.path / "p.csv", e.eta);
  EXPECT_EQ(back.values, e.population.values);
  EXPECT_EQ(back.labels, e.population.labels);
  EXPECT_EQ(back.null_mean, e.eta);
}

TEST(Cards, RoundTripRecomputesReferences) {
  TempDir dir("cards");
  const auto e = build_population(spec());
  write_election(e, dir.path);
  const auto data = read_cards_csv(dir.path / "cards.csv");
  ASSERT_EQ(data.size(), e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    EXPECT_EQ(data.cards[i].card_id, e.cards[i].card_id);
    EXPECT_EQ(data.cards[i].batch_id, e.cards[i].batch_id);
    EXPECT_NEAR(data.refs.values[i], e.refs.values[i], 1e-12);
  }
  EXPECT_NEAR(data.eta, e.eta, 1e-12);
  EXPECT_EQ(data.postulated().values, e.postulated.values);
}

TEST(Cards, BadVoteNamesTheLine) {
  TempDir dir("badvote");
  const auto path = dir.path / "cards.csv";
  std::ofstream(path) << "card_id,batch_id,has_linked_cvr,cvr_vote,mvr_vote,reference_value\n"
                         "a,,1,winner,winner,1\n"
                         "b,,1,perhaps,winner,1\n";
  try {
    read_cards_csv(path);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }
}

TEST(Manifest, NullMeanFollowsMargin) {
  TempDir dir("manifest");
  const auto e = build_population(spec());
  write_election(e, dir.path);
  const auto m = read_manifest(dir.path / "manifest.json");
  EXPECT_EQ(m.n, e.size());
  EXPECT_NEAR(m.eta, (2.0 - m.v) / 4.0, 1e-12);
  EXPECT_EQ(m.seed, 17u);
}

TEST(Manifest, MissingFileIsIoError) {
  try {
    read_manifest("/nonexistent/manifest.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
  }
}
