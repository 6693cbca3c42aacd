#pragma once

// Independent oracles and random instance builders shared by the unit tests
// and the acceptance binary. Nothing here calls the code it is used to check
// unless the name says so.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "oneaudit/assorter.hpp"
#include "oneaudit/audit.hpp"
#include "oneaudit/strategies.hpp"
#include "oneaudit/session.hpp"

namespace oneaudit::testing {

/// Expected log growth E log(1 + λ(X - η)) summed directly over the values.
inline double direct_log_growth(const std::vector<double>& values, double eta, double lambda) {
  double total = 0.0;
  for (double x : values) total += std::log1p(lambda * (x - eta));
  return total / static_cast<double>(values.size());
}

/// Argmax over an equispaced grid of n + 1 points on [0, max_bet].
struct GridArgmax {
  double lambda = 0.0;
  double growth = 0.0;
};

inline GridArgmax grid_argmax(const std::vector<double>& values, double eta, double max_bet,
                              std::size_t n) {
  GridArgmax best{0.0, direct_log_growth(values, eta, 0.0)};
  for (std::size_t k = 1; k <= n; ++k) {
    const double lambda = max_bet * static_cast<double>(k) / static_cast<double>(n);
    const double g = direct_log_growth(values, eta, lambda);
    if (std::isfinite(g) && g > best.growth) best = {lambda, g};
  }
  return best;
}

/// Average over λ_j = (j/D)/η of Π(1 + λ_j(x_i - η)), in plain products.
inline double direct_mixture_wealth(const std::vector<double>& draws, double eta, int grid_size) {
  double total = 0.0;
  for (int j = 1; j <= grid_size; ++j) {
    const double lambda = (static_cast<double>(j) / grid_size) / eta;
    double wealth = 1.0;
    for (double x : draws) wealth *= 1.0 + lambda * (x - eta);
    total += wealth;
  }
  return total / grid_size;
}

/// A small election: votes on linked and batched cards plus the manual votes.
struct SmallElection {
  std::vector<CardRecord> cards;
  BatchCvrs batch_cvrs;
  std::vector<Vote> mvrs;
};

inline Vote random_vote(std::mt19937_64& rng, double p_winner, double p_other) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng);
  if (r < p_other) return Vote::other;
  return r < p_other + (1.0 - p_other) * p_winner ? Vote::winner : Vote::loser;
}

/// Random cards with up to three batches. MVRs agree with the CVRs except
/// for a random fraction of changed votes; batch MVRs are a shuffle of the
/// batch CVRs before changes are applied.
inline SmallElection random_small_election(std::mt19937_64& rng, std::size_t n_cards,
                                           double error_rate) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SmallElection e;
  const double p_winner = 0.3 + 0.5 * u(rng);
  const double p_other = 0.2 * u(rng);
  const int batches = static_cast<int>(rng() % 4);
  for (std::size_t i = 0; i < n_cards; ++i) {
    const Vote vote = random_vote(rng, p_winner, p_other);
    const int b = batches == 0 ? -1 : static_cast<int>(rng() % static_cast<unsigned>(batches + 1)) - 1;
    const std::string id = "c" + std::to_string(i);
    if (b < 0) {
      e.cards.push_back(CardRecord::linked(id, vote));
    } else {
      const std::string batch = "b" + std::to_string(b);
      e.cards.push_back(CardRecord::in_batch(id, batch, vote));
      e.batch_cvrs[batch].push_back(vote);
    }
    e.mvrs.push_back(vote);
  }
  // Shuffle the manual votes within each batch: subtotals stay exact.
  for (auto& [batch, votes] : e.batch_cvrs) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < e.cards.size(); ++i) {
      if (e.cards[i].batch_id == batch) members.push_back(i);
    }
    for (std::size_t k = members.size(); k > 1; --k) {
      std::swap(e.mvrs[members[k - 1]], e.mvrs[members[rng() % k]]);
    }
  }
  for (auto& m : e.mvrs) {
    if (u(rng) < error_rate) m = random_vote(rng, 0.5, 0.2);
  }
  return e;
}

/// Exact assorter mean of the manual votes, counted directly.
inline double mvr_mean(const std::vector<Vote>& mvrs) {
  double total = 0.0;
  for (Vote v : mvrs) total += v == Vote::winner ? 1.0 : (v == Vote::loser ? 0.0 : 0.5);
  return total / static_cast<double>(mvrs.size());
}

/// |a - b| relative to the larger magnitude.
inline double rel_diff(double a, double b) {
  const double scale = std::max({1e-300, std::abs(a), std::abs(b)});
  return std::abs(a - b) / scale;
}

/// Exact conditional expectation of the next wealth, enumerating every
/// possible next draw. `remaining` holds the values the next draw can take
/// (the whole population with replacement, the undrawn cards without).
inline double expected_next_wealth(const SequentialAudit& audit, const std::vector<double>& remaining) {
  double total = 0.0;
  for (double x : remaining) {
    SequentialAudit copy = audit;
    copy.step(x);
    total += copy.state().wealth;
  }
  return total / static_cast<double>(remaining.size());
}

/// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() /
           ("oneaudit-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

/// Feeds a session MVRs drawn from `true_votes` (indexed like the cards) until
/// it stops or `limit` entries are in.
inline void drive_session(AuditSession& session, const std::vector<Vote>& true_votes, std::size_t limit) {
  while (session.entries().size() < limit) {
    const auto next = session.next_index();
    if (!next) break;
    session.enter_mvr(session.election().cards[*next].card_id, true_votes[*next]);
  }
}

/// p-value series of the same audit recomputed from scratch with run_audit.
inline std::vector<double> replay_p_values(const AuditSession& session) {
  const auto& election = session.election();
  const auto& entries = session.entries();
  AssorterPopulation pop;
  pop.values.assign(election.size(), 0.5);
  pop.null_mean = election.eta;
  std::vector<std::size_t> stream(session.stream().begin(),
                                  session.stream().begin() + static_cast<std::ptrdiff_t>(entries.size()));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    pop.values[stream[i]] = rescaled_overstatement(election.refs.values[stream[i]],
                                                   election.assorter(entries[i].vote),
                                                   election.assorter.upper_bound);
  }
  AuditOptions opt;
  opt.alpha = session.params().alpha;
  opt.cap = session.params().cap;
  opt.mode = SamplingMode::without_replacement;
  opt.record_trajectory = true;
  const auto result = run_audit(pop, stream, session_strategy(session.params(), election), opt);
  std::vector<double> out;
  for (const auto& step : result.trajectory) out.push_back(step.p_value);
  return out;
}

}  // namespace oneaudit::testing
