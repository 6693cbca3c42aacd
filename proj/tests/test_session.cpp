#include <gtest/gtest.h>

#include <random>

#include "oneaudit/session.hpp"
#include "support.hpp"

using namespace oneaudit;
using oneaudit::testing::TempDir;

namespace {

struct Fixture {
  Election election;
  std::shared_ptr<const ElectionData> data;

  explicit Fixture(ErrorModel errors = ErrorModel::none, std::uint64_t seed = 5) {
    PopulationSpec s;
    s.reported_mean = 0.6;
    s.n_cvr = 200;
    s.n_batch_cards = 200;
    s.batch_size = 50;
    s.error_model = errors;
    s.seed = seed;
    election = build_population(s);
    data = std::make_shared<const ElectionData>(ElectionData::from(election));
  }

  std::string card(std::size_t index) const { return election.cards[index].card_id; }
};

SessionParams params(std::uint64_t seed, std::string strategy = "apriori_kelly") {
  SessionParams p;
  p.seed = seed;
  p.strategy = std::move(strategy);
  p.election = "fixture";
  return p;
}

std::optional<ErrorCode> code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace

TEST(Session, FirstEntryPValue) {
  Fixture f;
  AuditSession s("s1", f.data, params(1));
  const auto index = *s.next_index();
  const auto& entry = s.enter_mvr(f.card(index), f.election.mvrs[index]);
  EXPECT_EQ(entry.p_value, std::min(1.0, 1.0 / entry.wealth));
  EXPECT_EQ(s.entries().size(), 1u);
}

// With every card linked to an accurate CVR each draw is exactly 1/2 > η, so
// wealth grows on every entry. Batch cards may legitimately draw below η.
TEST(Session, MatchingLinkedVotesDriveThePValueDown) {
  PopulationSpec spec;
  spec.reported_mean = 0.6;
  spec.n_cvr = 300;
  spec.n_batch_cards = 0;
  spec.seed = 2;
  const auto election = build_population(spec);
  AuditSession s("s1", std::make_shared<const ElectionData>(ElectionData::from(election)), params(2));
  double last = 1.0;
  while (s.status() == SessionStatus::awaiting_mvr) {
    const auto index = *s.next_index();
    const auto& e = s.enter_mvr(election.cards[index].card_id, election.mvrs[index]);
    EXPECT_GT(e.wealth, 1.0);
    if (last < 1.0) {
      EXPECT_LT(e.p_value, last);
    }
    last = e.p_value;
  }
  EXPECT_EQ(s.status(), SessionStatus::stopped_confirmed);
  EXPECT_LE(s.p_value(), 0.05);
}

TEST(Session, OutOfOrderEntryLeavesStateAlone) {
  Fixture f;
  AuditSession s("s1", f.data, params(3));
  const auto before = s.view();
  const auto expected = *s.next_index();
  const std::size_t other = expected == 0 ? 1 : 0;
  EXPECT_EQ(code_of([&] { s.enter_mvr(f.card(other), Vote::winner); }), ErrorCode::OutOfOrderEntry);
  EXPECT_EQ(s.view(), before);
}

TEST(Session, InvalidVoteLeavesStateAlone) {
  Fixture f;
  AuditSession s("s1", f.data, params(4));
  const auto before = s.view();
  EXPECT_EQ(code_of([&] { s.enter_mvr(f.card(*s.next_index()), std::string("abstain")); }),
            ErrorCode::InvalidVote);
  EXPECT_EQ(s.view(), before);
}

TEST(Session, OracleIsRefused) {
  Fixture f;
  EXPECT_EQ(code_of([&] { AuditSession("s1", f.data, params(1, "oracle_kelly")); }), ErrorCode::InvalidConfig);
}

TEST(Session, EntriesAfterStoppingAreRefused) {
  Fixture f;
  AuditSession s("s1", f.data, params(6));
  oneaudit::testing::drive_session(s, f.election.mvrs, 1000);
  ASSERT_NE(s.status(), SessionStatus::awaiting_mvr);
  EXPECT_EQ(code_of([&] { s.enter_mvr(f.card(0), Vote::winner); }), ErrorCode::InvalidState);
}

TEST(Session, LosingVotesEscalate) {
  Fixture f;
  AuditSession s("s1", f.data, params(7, "agrapa"));
  std::vector<Vote> all_losers(f.election.size(), Vote::loser);
  oneaudit::testing::drive_session(s, all_losers, 1000);
  EXPECT_EQ(s.status(), SessionStatus::escalate_full_count);
  EXPECT_TRUE(s.view()["next_card"].is_null());
}

TEST(Session, ViewFormatsNumbersAsTwelveDigitStrings) {
  Fixture f;
  AuditSession s("s1", f.data, params(8));
  const auto index = *s.next_index();
  s.enter_mvr(f.card(index), f.election.mvrs[index]);
  const auto v = s.view();
  ASSERT_TRUE(v["p_value"].is_string());
  EXPECT_EQ(v["p_value"].get<std::string>(), decimal12(s.p_value()));
  EXPECT_EQ(v["eta"].get<std::string>(), "0.45");
  EXPECT_EQ(v["draws"].get<std::size_t>(), 1u);
  EXPECT_EQ(v["next_card"]["position"].get<std::size_t>(), 2u);
}

TEST(Property, SessionMatchesRunAuditReplay) {
  std::mt19937_64 rng(71);
  const std::vector<std::string> names{"apriori_kelly", "agrapa", "universal_portfolio", "shrink_trunc", "cobra"};
  for (int trial = 0; trial < 20; ++trial) {
    Fixture f(trial % 2 ? ErrorModel::halve_margin : ErrorModel::none, rng());
    AuditSession s("s", f.data, params(rng(), names[static_cast<std::size_t>(trial) % names.size()]));
    std::vector<Vote> votes = f.election.mvrs;
    for (auto& v : votes) {
      if (rng() % 20 == 0) v = oneaudit::testing::random_vote(rng, 0.4, 0.2);
    }
    oneaudit::testing::drive_session(s, votes, 1 + rng() % 300);
    const auto replay = oneaudit::testing::replay_p_values(s);
    ASSERT_EQ(replay.size(), s.entries().size());
    for (std::size_t i = 0; i < replay.size(); ++i) {
      EXPECT_NEAR(replay[i], s.entries()[i].p_value, 1e-12) << "trial " << trial << " step " << i;
    }
  }
}

TEST(Manager, UnknownSessionIsNotFound) {
  Fixture f;
  SessionManager m([&](const std::string&) { return f.data; });
  EXPECT_EQ(code_of([&] { m.view("s9"); }), ErrorCode::SessionNotFound);
  EXPECT_EQ(code_of([&] { m.enter("s9", "x", "winner"); }), ErrorCode::SessionNotFound);
}

TEST(Manager, RestoreReplaysTheLog) {
  Fixture f;
  TempDir dir("sessions");
  std::vector<nlohmann::json> views;
  {
    SessionManager m([&](const std::string&) { return f.data; }, dir.path);
    for (std::uint64_t seed : {1u, 2u}) {
      const auto created = m.create(params(seed));
      const std::string id = created["session_id"];
      for (int i = 0; i < 5; ++i) {
        const std::string card = m.view(id)["next_card"]["card_id"];
        std::size_t index = 0;
        while (f.card(index) != card) ++index;
        m.enter(id, card, std::string(to_string(f.election.mvrs[index])));
      }
      // A rejected entry must not reach the log.
      EXPECT_THROW(m.enter(id, "not-a-card", "winner"), Error);
      views.push_back(m.view(id));
    }
  }
  SessionManager restored([&](const std::string&) { return f.data; }, dir.path);
  EXPECT_EQ(restored.restore(), 2u);
  EXPECT_EQ(restored.view("s1"), views[0]);
  EXPECT_EQ(restored.view("s2"), views[1]);
  EXPECT_EQ(restored.create(params(3))["session_id"], "s3");
}
