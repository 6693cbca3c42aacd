#pragma once

// Assorters, ONEAudit reference values and overstatement-assorter populations.

#include <algorithm>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oneaudit/error.hpp"

namespace oneaudit {

enum class Vote { winner, loser, other };

constexpr std::string_view to_string(Vote vote) {
  switch (vote) {
    case Vote::winner: return "winner";
    case Vote::loser: return "loser";
    case Vote::other: return "other";
  }
  return "other";
}

inline Vote parse_vote(std::string_view text) {
  if (text == "winner" || text == "w" || text == "1") return Vote::winner;
  if (text == "loser" || text == "l" || text == "0") return Vote::loser;
  if (text == "other" || text == "o") return Vote::other;
  throw Error(ErrorCode::InvalidVote, "unrecognised vote '" + std::string(text) + "'");
}

/// Maps a card's vote for one (winner, loser) pair to [0, u].
struct Assorter {
  double upper_bound = 1.0;
  double winner_value = 1.0;
  double loser_value = 0.0;
  double other_value = 0.5;

  double operator()(Vote vote) const {
    switch (vote) {
      case Vote::winner: return winner_value;
      case Vote::loser: return loser_value;
      case Vote::other: return other_value;
    }
    return other_value;
  }
};

inline Assorter plurality_assorter() { return Assorter{1.0, 1.0, 0.0, 0.5}; }

/// One ballot card. The same shape holds a CVR or an MVR; for cards without a
/// linked CVR the batch id names the reporting batch the card was tabulated in.
struct CardRecord {
  std::string card_id;
  Vote vote = Vote::other;
  std::optional<std::string> batch_id;
  bool has_linked_cvr = true;

  static CardRecord linked(std::string id, Vote vote) {
    return CardRecord{std::move(id), vote, std::nullopt, true};
  }
  static CardRecord in_batch(std::string id, std::string batch, Vote vote) {
    return CardRecord{std::move(id), vote, std::move(batch), false};
  }

  bool consistent() const { return batch_id.has_value() != has_linked_cvr; }
};

/// CVR votes reported for each unlinked batch, keyed by batch id.
using BatchCvrs = std::map<std::string, std::vector<Vote>>;

struct ReferenceValueSet {
  std::vector<double> values;
  double reported_mean = 0.0;
  double reported_margin = 0.0;

  static ReferenceValueSet from_values(std::vector<double> values) {
    ReferenceValueSet refs;
    if (!values.empty()) {
      refs.reported_mean =
          std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    }
    refs.reported_margin = 2.0 * refs.reported_mean - 1.0;
    refs.values = std::move(values);
    return refs;
  }

  std::size_t size() const { return values.size(); }
};

/// v = 2 r̄ - 1. An audit can only proceed when the reference values show a win.
inline double reported_margin(const ReferenceValueSet& refs) {
  if (refs.values.empty()) {
    throw Error(ErrorCode::InvalidConfig, "reference value set is empty");
  }
  const double v = 2.0 * refs.reported_mean - 1.0;
  if (!(v > 0.0)) {
    throw Error(ErrorCode::NonPositiveMargin,
                "reported assorter mean " + std::to_string(refs.reported_mean) +
                    " does not exceed 1/2");
  }
  return v;
}

/// Reference values per card: A(c_i) for cards with a linked CVR, the batch
/// mean of A over the batch's CVRs otherwise.
inline ReferenceValueSet oneaudit_references(std::span<const CardRecord> cards,
                                             const BatchCvrs& batch_cvrs,
                                             const Assorter& assorter) {
  std::map<std::string, double> batch_mean;
  for (const auto& [id, votes] : batch_cvrs) {
    if (votes.empty()) continue;
    double total = 0.0;
    for (Vote v : votes) total += assorter(v);
    batch_mean[id] = total / static_cast<double>(votes.size());
  }

  std::vector<double> values;
  values.reserve(cards.size());
  for (const auto& card : cards) {
    if (!card.consistent()) {
      throw Error(ErrorCode::InvalidConfig,
                  "card " + card.card_id + " must have either a linked CVR or a batch id");
    }
    if (card.has_linked_cvr) {
      values.push_back(assorter(card.vote));
      continue;
    }
    auto it = batch_mean.find(*card.batch_id);
    if (it == batch_mean.end()) {
      throw Error(ErrorCode::EmptyBatch, "batch " + *card.batch_id + " has no CVRs");
    }
    values.push_back(it->second);
  }
  return ReferenceValueSet::from_values(std::move(values));
}

/// Overstatement assorter x = (1 - (r - a)/u) / (2 - v/u), in [0, 2u/(2u - v)].
inline double overstatement_assort(double reference, double mvr_value, double u, double v) {
  return (1.0 - (reference - mvr_value) / u) / (2.0 - v / u);
}

/// Factor that maps overstatement values onto [0, 1].
inline double rescale_factor(double u, double v) { return 2.0 * u / (2.0 * u - v); }

/// Null mean of the rescaled overstatement population, (2u - v) / (4u).
inline double rescaled_null_mean(double u, double v) { return (2.0 * u - v) / (4.0 * u); }

/// Overstatement assorter already divided by the rescale factor: (1 - ω/u) / 2.
/// Cards whose reference value matches the MVR map to exactly 1/2.
inline double rescaled_overstatement(double reference, double mvr_value, double u) {
  return (1.0 - (reference - mvr_value) / u) / 2.0;
}

/// Finite population of assorter values together with the null mean it is tested against.
struct AssorterPopulation {
  std::vector<double> values;
  double null_mean = 0.5;
  double upper_bound = 1.0;
  /// Optional per-value stratum tag (0 = linked CVR, 1 = batch in generated populations).
  std::vector<int> labels;

  std::size_t size() const { return values.size(); }

  double mean() const {
    if (values.empty()) return 0.0;
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  }

  void validate() const {
    if (values.empty()) throw Error(ErrorCode::InvalidConfig, "population is empty");
    if (!(null_mean > 0.0 && null_mean < upper_bound)) {
      throw Error(ErrorCode::InvalidConfig, "null mean must lie strictly inside (0, upper bound)");
    }
    if (!labels.empty() && labels.size() != values.size()) {
      throw Error(ErrorCode::InvalidConfig, "label count does not match value count");
    }
    for (double x : values) {
      if (!(x >= 0.0 && x <= upper_bound)) {
        throw Error(ErrorCode::InvalidConfig,
                    "population value " + std::to_string(x) + " outside [0, upper bound]");
      }
    }
  }
};

/// Raw overstatement population (null mean 1/2, upper bound 2u/(2u-v)).
inline AssorterPopulation overstatement_population(std::span<const double> references,
                                                   std::span<const double> mvr_values, double u,
                                                   double v) {
  if (references.size() != mvr_values.size()) {
    throw Error(ErrorCode::InvalidConfig, "reference and MVR counts differ");
  }
  AssorterPopulation pop;
  pop.values.reserve(references.size());
  for (std::size_t i = 0; i < references.size(); ++i) {
    pop.values.push_back(overstatement_assort(references[i], mvr_values[i], u, v));
  }
  pop.null_mean = 0.5;
  pop.upper_bound = rescale_factor(u, v);
  return pop;
}

/// Divides every value by 2u/(2u-v) so the population lives on [0, 1].
inline AssorterPopulation rescale(const AssorterPopulation& raw, double u, double v) {
  const double factor = rescale_factor(u, v);
  AssorterPopulation out;
  out.values.reserve(raw.values.size());
  for (double x : raw.values) {
    if (!(x >= 0.0 && x <= factor * (1.0 + 1e-12))) {
      throw Error(ErrorCode::InvalidConfig,
                  "overstatement value " + std::to_string(x) + " outside [0, 2u/(2u-v)]");
    }
    // clamp absorbs the last-ulp rounding of x / factor at the top of the range
    out.values.push_back(std::min(x / factor, 1.0));
  }
  out.null_mean = raw.null_mean / factor;
  out.upper_bound = 1.0;
  out.labels = raw.labels;
  return out;
}

/// Rescaled overstatement population built directly from references and MVR values.
inline AssorterPopulation rescaled_population(std::span<const double> references,
                                              std::span<const double> mvr_values, double u,
                                              double v) {
  if (references.size() != mvr_values.size()) {
    throw Error(ErrorCode::InvalidConfig, "reference and MVR counts differ");
  }
  AssorterPopulation pop;
  pop.values.reserve(references.size());
  for (std::size_t i = 0; i < references.size(); ++i) {
    pop.values.push_back(rescaled_overstatement(references[i], mvr_values[i], u));
  }
  pop.null_mean = rescaled_null_mean(u, v);
  pop.upper_bound = 1.0;
  return pop;
}

/// The rescaled population an auditor would expect if every CVR were an exact
/// reading of its card: linked cards contribute 1/2, and each unlinked batch
/// contributes one value per reported CVR in it.
inline AssorterPopulation postulated_population(std::span<const CardRecord> cards,
                                                const BatchCvrs& batch_cvrs,
                                                const Assorter& assorter, double v) {
  const double u = assorter.upper_bound;
  AssorterPopulation pop;
  pop.null_mean = rescaled_null_mean(u, v);
  pop.upper_bound = 1.0;

  std::map<std::string, std::size_t> batch_cards;
  for (const auto& card : cards) {
    if (card.has_linked_cvr) {
      pop.values.push_back(0.5);
      pop.labels.push_back(0);
    } else {
      ++batch_cards[*card.batch_id];
    }
  }
  for (const auto& [id, count] : batch_cards) {
    auto it = batch_cvrs.find(id);
    if (it == batch_cvrs.end() || it->second.empty()) {
      throw Error(ErrorCode::EmptyBatch, "batch " + id + " has no CVRs");
    }
    const auto& votes = it->second;
    double total = 0.0;
    for (Vote vote : votes) total += assorter(vote);
    const double reference = total / static_cast<double>(votes.size());
    // One value per card; the CVR list supplies the postulated MVR of each.
    for (std::size_t k = 0; k < count; ++k) {
      const Vote vote = votes[k % votes.size()];
      pop.values.push_back(rescaled_overstatement(reference, assorter(vote), u));
      pop.labels.push_back(1);
    }
  }
  return pop;
}

}  // namespace oneaudit
