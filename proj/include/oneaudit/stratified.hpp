#pragma once

// Two-stratum union-of-intersections test with banded, fixed per-band bets.
//
// The complementary null {w1·η1 + w2·η2 ≤ η} is covered by the boundary
// segment w1·η1 + w2·η2 = η, η_k ∈ [0, 1]. The segment is cut into G bands;
// every band bets a fixed λ_k in each stratum, so the product of the stratum
// TSMs is log-concave along the band and its minimum sits at a band vertex.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "oneaudit/assorter.hpp"
#include "oneaudit/audit.hpp"
#include "oneaudit/error.hpp"
#include "oneaudit/kelly.hpp"
#include "oneaudit/sampling.hpp"

namespace oneaudit {

inline constexpr int kStrata = 2;

struct StratumSpec {
  AssorterPopulation population;
  double weight = 0.0;
};

struct NullPoint {
  double eta1 = 0.0;
  double eta2 = 0.0;

  double operator[](int k) const { return k == 0 ? eta1 : eta2; }
};

/// Feasible η1 values on w1·η1 + w2·η2 = η with both means in [0, 1].
struct NullSegment {
  std::array<double, kStrata> weights{};
  double eta = 0.0;
  double lo = 0.0;
  double hi = 0.0;

  NullPoint at(double eta1) const {
    if (weights[1] <= 0.0) return {eta1, eta};
    const double eta2 = (eta - weights[0] * eta1) / weights[1];
    return {eta1, std::clamp(eta2, 0.0, 1.0)};
  }
};

inline NullSegment null_boundary(double w1, double w2, double global_eta) {
  if (w1 < 0.0 || w2 < 0.0 || std::abs(w1 + w2 - 1.0) > 1e-12) {
    throw Error(ErrorCode::InvalidConfig, "stratum weights must be nonnegative and sum to 1");
  }
  if (!(global_eta > 0.0 && global_eta < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "global null mean must lie in (0, 1)");
  }
  NullSegment seg;
  seg.weights = {w1, w2};
  seg.eta = global_eta;
  if (w2 <= 0.0) {
    seg.lo = seg.hi = global_eta;
  } else if (w1 <= 0.0) {
    // Only stratum 2 is sampled; η1 is immaterial.
    seg.lo = seg.hi = 0.0;
  } else {
    seg.lo = std::max(0.0, (global_eta - w2) / w1);
    seg.hi = std::min(1.0, global_eta / w1);
  }
  if (seg.lo > seg.hi + 1e-15) {
    throw Error(ErrorCode::EmptyNull, "no feasible intersection null");
  }
  return seg;
}

struct NullBand {
  double lo = 0.0;
  double hi = 0.0;
  NullPoint centroid;
  std::array<NullPoint, 2> vertices;
  std::array<double, kStrata> bets{};
};

/// Picks the bet for stratum k at null mean eta_k; must not exceed max_bet.
using StratumBetRule = std::function<double(int stratum, double eta_k, double max_bet)>;

/// Equal-width bands on the segment; bets chosen at each band's centroid and
/// capped so they stay admissible at both vertices.
inline std::vector<NullBand> band_partition(const NullSegment& segment, int bands,
                                            const StratumBetRule& bet_rule) {
  if (bands < 1) throw Error(ErrorCode::InvalidConfig, "band count must be at least 1");
  std::vector<NullBand> out(static_cast<std::size_t>(bands));
  const double width = (segment.hi - segment.lo) / bands;
  for (int g = 0; g < bands; ++g) {
    auto& band = out[static_cast<std::size_t>(g)];
    band.lo = segment.lo + width * g;
    band.hi = g + 1 == bands ? segment.hi : segment.lo + width * (g + 1);
    band.centroid = segment.at(0.5 * (band.lo + band.hi));
    band.vertices = {segment.at(band.lo), segment.at(band.hi)};
    for (int k = 0; k < kStrata; ++k) {
      if (segment.weights[static_cast<std::size_t>(k)] <= 0.0) {
        band.bets[static_cast<std::size_t>(k)] = 0.0;
        continue;
      }
      const double top = std::max(band.vertices[0][k], band.vertices[1][k]);
      const double max_bet = top > 0.0 ? 1.0 / top : 1e12;
      const double bet = bet_rule(k, band.centroid[k], max_bet);
      band.bets[static_cast<std::size_t>(k)] = std::clamp(bet, 0.0, max_bet);
    }
  }
  return out;
}

/// Kelly bets against each stratum's (true or postulated) population.
inline StratumBetRule kelly_stratum_bets(std::array<ValueDistribution, kStrata> strata) {
  return [strata = std::move(strata)](int k, double eta_k, double max_bet) {
    const auto& dist = strata[static_cast<std::size_t>(k)];
    if (!(eta_k > 0.0)) return max_bet;
    if (eta_k >= 1.0) return 0.0;
    return kelly_bet_bisection(dist, eta_k, max_bet);
  };
}

struct LabeledDraw {
  int stratum = 0;
  std::size_t index = 0;
};

/// Chooses the stratum of each successive draw: the stratum whose next draw is
/// due earliest, (count_k + 1)/w_k, ties to the lower index. Per-stratum
/// counts stay within one draw of proportional allocation.
class RoundRobinScheduler {
 public:
  explicit RoundRobinScheduler(std::vector<double> weights) : weights_(std::move(weights)) {
    counts_.assign(weights_.size(), 0);
    if (weights_.empty()) throw Error(ErrorCode::InvalidConfig, "no strata to interleave");
  }

  int next() {
    int best = -1;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      if (weights_[k] <= 0.0) continue;
      if (best < 0) {
        best = static_cast<int>(k);
        continue;
      }
      const auto b = static_cast<std::size_t>(best);
      const double due_k = (static_cast<double>(counts_[k]) + 1.0) * weights_[b];
      const double due_best = (static_cast<double>(counts_[b]) + 1.0) * weights_[k];
      if (due_k < due_best - 1e-12) best = static_cast<int>(k);
    }
    if (best < 0) throw Error(ErrorCode::InvalidConfig, "all stratum weights are zero");
    ++counts_[static_cast<std::size_t>(best)];
    return best;
  }

  const std::vector<std::size_t>& counts() const { return counts_; }

 private:
  std::vector<double> weights_;
  std::vector<std::size_t> counts_;
};

/// Interleaves per-stratum streams by the round-robin rule until the stratum
/// that is due next has no draws left.
inline std::vector<LabeledDraw> interleave_round_robin(
    std::span<const std::vector<std::size_t>> streams, std::span<const double> weights) {
  if (streams.size() != weights.size()) {
    throw Error(ErrorCode::InvalidConfig, "one weight per stratum stream is required");
  }
  RoundRobinScheduler scheduler(std::vector<double>(weights.begin(), weights.end()));
  std::vector<std::size_t> pos(streams.size(), 0);
  std::vector<LabeledDraw> out;
  for (;;) {
    const int k = scheduler.next();
    auto& p = pos[static_cast<std::size_t>(k)];
    const auto& stream = streams[static_cast<std::size_t>(k)];
    if (p >= stream.size()) break;
    out.push_back({k, stream[p++]});
  }
  return out;
}

/// Log wealth of the product TSM at an intersection null with fixed per-stratum bets.
inline double intersection_log_wealth(std::span<const std::vector<double>> stratum_draws,
                                      const std::array<double, kStrata>& bets, NullPoint null) {
  double total = 0.0;
  for (int k = 0; k < kStrata && k < static_cast<int>(stratum_draws.size()); ++k) {
    for (double x : stratum_draws[static_cast<std::size_t>(k)]) {
      const double factor = 1.0 + bets[static_cast<std::size_t>(k)] * (x - null[k]);
      total += factor > 0.0 ? std::log(factor) : -std::numeric_limits<double>::infinity();
    }
  }
  return total;
}

/// Running UI-TS: log wealth at both vertices of every band.
class UitsState {
 public:
  explicit UitsState(std::vector<NullBand> bands) : bands_(std::move(bands)) {
    log_wealth_.assign(bands_.size() * 2, 0.0);
  }

  void step(int stratum, double x) {
    if (stratum < 0 || stratum >= kStrata) {
      throw Error(ErrorCode::InvalidConfig, "draw carries an unknown stratum label");
    }
    if (!(x >= 0.0 && x <= 1.0)) {
      throw Error(ErrorCode::InvalidConfig, "draw outside [0, 1]");
    }
    const auto k = static_cast<std::size_t>(stratum);
    double lowest = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < bands_.size(); ++b) {
      const auto& band = bands_[b];
      for (std::size_t v = 0; v < 2; ++v) {
        const double eta_k = band.vertices[v][stratum];
        const double bet = band.bets[k];
        if (bet < 0.0 || (eta_k > 0.0 && bet > (1.0 / eta_k) * (1.0 + 1e-12))) {
          throw Error(ErrorCode::BetOutOfRange, "band bet exceeds 1/eta at a vertex");
        }
        const double factor = 1.0 + bet * (x - eta_k);
        double& lw = log_wealth_[2 * b + v];
        lw += factor > 0.0 ? std::log(factor) : -std::numeric_limits<double>::infinity();
        lowest = std::min(lowest, lw);
      }
    }
    ++t_;
    value_ = std::exp(lowest);
    max_value_ = std::max(max_value_, value_);
  }

  std::size_t t() const { return t_; }
  /// Minimum over band vertices of the product of stratum wealths.
  double value() const { return value_; }
  double max_value() const { return max_value_; }
  double p_value() const { return std::min(1.0, 1.0 / max_value_); }
  const std::vector<NullBand>& bands() const { return bands_; }
  double vertex_log_wealth(std::size_t band, std::size_t vertex) const {
    return log_wealth_[2 * band + vertex];
  }

 private:
  std::vector<NullBand> bands_;
  std::vector<double> log_wealth_;
  std::size_t t_ = 0;
  double value_ = 1.0;
  double max_value_ = 1.0;
};

inline void uits_step(UitsState& state, const LabeledDraw& draw, double x) {
  state.step(draw.stratum, x);
}

/// Runs a stratified audit: with-replacement draws in each stratum,
/// interleaved round-robin, stopping when the UI-TS p-value reaches alpha.
inline AuditResult run_stratified_audit(std::span<const StratumSpec> strata,
                                        const std::vector<NullBand>& bands, double alpha,
                                        std::size_t cap, std::uint64_t seed) {
  if (strata.size() != kStrata) throw Error(ErrorCode::InvalidConfig, "exactly two strata");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidConfig, "alpha must lie in (0, 1)");
  RoundRobinScheduler scheduler({strata[0].weight, strata[1].weight});
  std::array<Rng, kStrata> rngs{Rng(splitmix64(seed)), Rng(splitmix64(seed ^ 0xA5A5A5A5ULL))};
  UitsState state(bands);
  AuditResult result;
  while (state.t() < cap) {
    const int k = scheduler.next();
    const auto& pop = strata[static_cast<std::size_t>(k)].population;
    const std::size_t index = rngs[static_cast<std::size_t>(k)].uniform_index(pop.size());
    state.step(k, pop.values[index]);
    if (state.p_value() <= alpha) {
      result.confirmed = true;
      break;
    }
    if (state.value() <= 0.0) break;  // some vertex is bankrupt for good
  }
  result.draws = state.t();
  result.stopping_time = result.confirmed ? state.t() : cap;
  result.final_p_value = state.p_value();
  return result;
}

}  // namespace oneaudit
