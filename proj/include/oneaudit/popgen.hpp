#pragma once

// Parameterised two-stratum ONEAudit elections: linked-CVR cards plus
// equal-size reporting batches, two-candidate plurality, every vote valid.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "oneaudit/assorter.hpp"
#include "oneaudit/error.hpp"
#include "oneaudit/sampling.hpp"

namespace oneaudit {

enum class ErrorModel { none, halve_margin };

constexpr std::string_view to_string(ErrorModel model) {
  return model == ErrorModel::none ? "none" : "halve_margin";
}

inline ErrorModel parse_error_model(std::string_view text) {
  if (text == "none") return ErrorModel::none;
  if (text == "halve_margin") return ErrorModel::halve_margin;
  throw Error(ErrorCode::InvalidConfig, "unknown error model '" + std::string(text) + "'");
}

struct PopulationSpec {
  /// Global reported assorter mean Ā^c.
  double reported_mean = 0.6;
  /// Difference between the CVR-stratum mean and the batch-stratum mean.
  double across_gap = 0.0;
  /// Spread of batch means within the batch stratum.
  double within_gap = 0.0;
  std::size_t n_cvr = 10000;
  std::size_t n_batch_cards = 10000;
  std::size_t batch_size = 1000;
  ErrorModel error_model = ErrorModel::none;
  std::uint64_t seed = 0;

  std::size_t total() const { return n_cvr + n_batch_cards; }
  std::size_t batch_count() const { return batch_size == 0 ? 0 : n_batch_cards / batch_size; }
};

/// Target MVR mean once batch tallies are corrupted: half-way between Ā^c and 1/2.
inline double halved_margin_mean(double reported_mean) { return (reported_mean + 0.5) / 2.0; }

struct StratumMeans {
  double cvr = 0.0;
  double batch = 0.0;
  std::vector<double> batch_means;
};

/// Stratum means Ā^c ± the across gap (apportioned by stratum size so the
/// global mean stays at Ā^c) and evenly spaced batch means.
inline StratumMeans stratum_means(const PopulationSpec& spec) {
  if (spec.total() == 0) throw Error(ErrorCode::InfeasibleSpec, "population has no cards");
  if (spec.n_batch_cards > 0 && (spec.batch_size == 0 || spec.n_batch_cards % spec.batch_size != 0)) {
    throw Error(ErrorCode::InfeasibleSpec, "n_batch_cards (" + std::to_string(spec.n_batch_cards) +
                                               ") is not divisible by batch_size (" +
                                               std::to_string(spec.batch_size) + ")");
  }
  const double n = static_cast<double>(spec.total());
  const double w_cvr = static_cast<double>(spec.n_cvr) / n;
  const double w_batch = static_cast<double>(spec.n_batch_cards) / n;

  StratumMeans means;
  means.cvr = spec.n_batch_cards == 0 ? spec.reported_mean : spec.reported_mean + spec.across_gap * w_batch;
  means.batch = spec.n_cvr == 0 ? spec.reported_mean : spec.reported_mean - spec.across_gap * w_cvr;

  const std::size_t batches = spec.batch_count();
  for (std::size_t b = 0; b < batches; ++b) {
    const double frac = batches == 1 ? 0.5 : static_cast<double>(b) / static_cast<double>(batches - 1);
    means.batch_means.push_back(means.batch - spec.within_gap / 2.0 + spec.within_gap * frac);
  }

  auto check = [](double m, const char* what) {
    if (!(m >= -1e-12 && m <= 1.0 + 1e-12)) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%s mean %.6f outside [0, 1]", what, m);
      throw Error(ErrorCode::InfeasibleSpec, buf);
    }
  };
  check(spec.reported_mean, "reported");
  if (spec.n_cvr > 0) check(means.cvr, "CVR stratum");
  if (spec.n_batch_cards > 0) check(means.batch, "batch stratum");
  for (double m : means.batch_means) check(m, "batch");
  return means;
}

struct Election {
  PopulationSpec spec;
  Assorter assorter = plurality_assorter();
  /// Cards in index order: the n_cvr linked cards, then each batch in turn.
  /// Linked cards carry their CVR vote; batch cards carry no usable vote.
  std::vector<CardRecord> cards;
  BatchCvrs batch_cvrs;
  /// Manual (true) vote of every card.
  std::vector<Vote> mvrs;
  ReferenceValueSet refs;
  double v = 0.0;
  double eta = 0.0;
  /// True rescaled overstatement population, labelled 0 (CVR) / 1 (batch).
  AssorterPopulation population;
  /// What the population would be if every reported CVR were exact.
  AssorterPopulation postulated;

  std::size_t size() const { return cards.size(); }

  double true_mean() const {
    double total = 0.0;
    for (Vote vote : mvrs) total += assorter(vote);
    return mvrs.empty() ? 0.0 : total / static_cast<double>(mvrs.size());
  }

  /// True population restricted to one stratum label.
  AssorterPopulation stratum(int label) const {
    AssorterPopulation out;
    out.null_mean = population.null_mean;
    out.upper_bound = 1.0;
    for (std::size_t i = 0; i < population.size(); ++i) {
      if (population.labels[i] == label) {
        out.values.push_back(population.values[i]);
        out.labels.push_back(label);
      }
    }
    return out;
  }

  /// Recomputes the true population from the MVRs; reference values stay as reported.
  void rebuild_population() {
    population.values.resize(cards.size());
    population.labels.resize(cards.size());
    const double u = assorter.upper_bound;
    for (std::size_t i = 0; i < cards.size(); ++i) {
      population.values[i] = rescaled_overstatement(refs.values[i], assorter(mvrs[i]), u);
      population.labels[i] = cards[i].has_linked_cvr ? 0 : 1;
    }
    population.null_mean = eta;
    population.upper_bound = 1.0;
  }
};

namespace detail {

inline std::string padded(std::string_view prefix, std::size_t i, int width) {
  std::string digits = std::to_string(i);
  if (digits.size() < static_cast<std::size_t>(width)) {
    digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  }
  return std::string(prefix) + digits;
}

/// `winners` winner votes and the rest loser votes, in seeded random order.
inline std::vector<Vote> shuffled_votes(std::size_t size, std::size_t winners, Rng& rng) {
  std::vector<Vote> votes(size, Vote::loser);
  std::fill_n(votes.begin(), winners, Vote::winner);
  for (std::size_t i = size; i > 1; --i) {
    std::swap(votes[i - 1], votes[rng.uniform_index(i)]);
  }
  return votes;
}

inline std::size_t rounded_count(double mean, std::size_t size) {
  return static_cast<std::size_t>(std::llround(std::clamp(mean, 0.0, 1.0) * static_cast<double>(size)));
}

}  // namespace detail

/// Flips winner MVRs to loser MVRs in batch-stratum cards until the true
/// assorter mean falls to `target_mean`. Flips are apportioned across batches
/// by largest remainder on batch size; a batch short of winners passes its
/// excess to the next batch with room. Reference values are left untouched.
inline void shift_batch_mvrs(Election& election, double target_mean) {
  const std::size_t n = election.size();
  std::size_t winners_now = 0;
  for (Vote vote : election.mvrs) winners_now += vote == Vote::winner ? 1 : 0;
  const auto target = static_cast<std::size_t>(std::llround(target_mean * static_cast<double>(n)));
  if (target >= winners_now) return;
  std::size_t flips = winners_now - target;

  // Winner positions per batch, in card order (card order is already seeded-random).
  std::vector<std::vector<std::size_t>> winner_slots;
  std::vector<std::size_t> sizes;
  std::string current;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& card = election.cards[i];
    if (card.has_linked_cvr) continue;
    if (winner_slots.empty() || *card.batch_id != current) {
      current = *card.batch_id;
      winner_slots.emplace_back();
      sizes.push_back(0);
    }
    ++sizes.back();
    if (election.mvrs[i] == Vote::winner) winner_slots.back().push_back(i);
  }
  std::size_t available = 0;
  for (const auto& slots : winner_slots) available += slots.size();
  if (flips > available) {
    throw Error(ErrorCode::InfeasibleSpec, "need " + std::to_string(flips) +
                                               " flips but the batch stratum has only " +
                                               std::to_string(available) + " winner votes");
  }

  const std::size_t batch_cards = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  std::vector<std::size_t> quota(sizes.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t b = 0; b < sizes.size(); ++b) {
    const double exact = static_cast<double>(flips) * static_cast<double>(sizes[b]) /
                         static_cast<double>(batch_cards);
    quota[b] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[b];
    remainders.emplace_back(exact - std::floor(exact), b);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < flips; ++r, ++assigned) ++quota[remainders[r].second];

  std::size_t excess = 0;
  for (std::size_t b = 0; b < quota.size(); ++b) {
    if (quota[b] > winner_slots[b].size()) {
      excess += quota[b] - winner_slots[b].size();
      quota[b] = winner_slots[b].size();
    }
  }
  for (std::size_t b = 0; excess > 0 && b < quota.size(); ++b) {
    const std::size_t room = winner_slots[b].size() - quota[b];
    const std::size_t take = std::min(room, excess);
    quota[b] += take;
    excess -= take;
  }

  for (std::size_t b = 0; b < quota.size(); ++b) {
    for (std::size_t k = 0; k < quota[b]; ++k) election.mvrs[winner_slots[b][k]] = Vote::loser;
  }
  election.rebuild_population();
}

/// Corrupts the batch tallies so the true margin is half the reported one.
inline void inject_tally_error(const PopulationSpec& spec, Election& election) {
  if (spec.error_model != ErrorModel::halve_margin) {
    throw Error(ErrorCode::InvalidConfig, "inject_tally_error requires error_model = halve_margin");
  }
  shift_batch_mvrs(election, halved_margin_mean(spec.reported_mean));
}

inline Election build_population(const PopulationSpec& spec) {
  const StratumMeans means = stratum_means(spec);
  Rng rng(splitmix64(spec.seed));

  Election election;
  election.spec = spec;
  const std::size_t n = spec.total();
  const std::size_t batches = spec.batch_count();

  const std::size_t cvr_winners = detail::rounded_count(means.cvr, spec.n_cvr);
  std::vector<std::size_t> batch_winners(batches);
  for (std::size_t b = 0; b < batches; ++b) {
    batch_winners[b] = detail::rounded_count(means.batch_means[b], spec.batch_size);
  }
  // The rounding residual lands in the last batch so the global mean is exact.
  if (batches > 0) {
    const auto target = static_cast<long long>(std::llround(spec.reported_mean * static_cast<double>(n)));
    long long have = static_cast<long long>(cvr_winners);
    for (auto w : batch_winners) have += static_cast<long long>(w);
    const long long last = static_cast<long long>(batch_winners.back()) + (target - have);
    if (last < 0 || last > static_cast<long long>(spec.batch_size)) {
      throw Error(ErrorCode::InfeasibleSpec, "rounding residual does not fit in the last batch");
    }
    batch_winners.back() = static_cast<std::size_t>(last);
  }

  election.cards.reserve(n);
  election.mvrs.reserve(n);
  for (Vote vote : detail::shuffled_votes(spec.n_cvr, cvr_winners, rng)) {
    election.cards.push_back(CardRecord::linked(detail::padded("cvr-", election.cards.size(), 6), vote));
    election.mvrs.push_back(vote);
  }
  for (std::size_t b = 0; b < batches; ++b) {
    const std::string batch_id = detail::padded("batch-", b, 3);
    auto votes = detail::shuffled_votes(spec.batch_size, batch_winners[b], rng);
    for (std::size_t k = 0; k < votes.size(); ++k) {
      election.cards.push_back(
          CardRecord::in_batch(batch_id + "-" + detail::padded("", k, 4), batch_id, votes[k]));
      election.mvrs.push_back(votes[k]);
    }
    election.batch_cvrs[batch_id] = std::move(votes);
  }

  election.refs = oneaudit_references(election.cards, election.batch_cvrs, election.assorter);
  election.v = reported_margin(election.refs);
  election.eta = rescaled_null_mean(election.assorter.upper_bound, election.v);
  election.rebuild_population();
  election.postulated = election.population;

  if (spec.error_model == ErrorModel::halve_margin) inject_tally_error(spec, election);
  return election;
}

}  // namespace oneaudit
