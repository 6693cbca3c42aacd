#pragma once

// Betting strategies. A BetStrategy is an immutable description; prepare()
// resolves anything that depends on the null mean (Kelly roots, grids) once,
// and a Bettor carries the per-audit history a predictable bet may use.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oneaudit/assorter.hpp"
#include "oneaudit/error.hpp"
#include "oneaudit/kelly.hpp"

namespace oneaudit {

enum class StrategyKind {
  fixed,
  apriori_kelly,
  oracle_kelly,
  agrapa,
  universal_portfolio,
  shrink_trunc,
  cobra,
};

constexpr std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::fixed: return "fixed";
    case StrategyKind::apriori_kelly: return "apriori_kelly";
    case StrategyKind::oracle_kelly: return "oracle_kelly";
    case StrategyKind::agrapa: return "agrapa";
    case StrategyKind::universal_portfolio: return "universal_portfolio";
    case StrategyKind::shrink_trunc: return "shrink_trunc";
    case StrategyKind::cobra: return "cobra";
  }
  return "fixed";
}

inline StrategyKind parse_strategy_kind(std::string_view name) {
  for (auto kind : {StrategyKind::fixed, StrategyKind::apriori_kelly, StrategyKind::oracle_kelly,
                    StrategyKind::agrapa, StrategyKind::universal_portfolio,
                    StrategyKind::shrink_trunc, StrategyKind::cobra}) {
    if (name == to_string(kind)) return kind;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown strategy '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Closed-form bets

/// Startup history used by AGRAPA before two draws are available.
inline constexpr double agrapa_startup_offset = 0.01;
inline constexpr double agrapa_startup_variance = 0.25;

/// AGRAPA: 0 ∨ (m - η) / (σ² + (m - η)²) ∧ c/η from lagged mean and variance.
inline double agrapa_bet(double mean_lag, double var_lag, double eta, double c) {
  const double gap = mean_lag - eta;
  const double denom = var_lag + gap * gap;
  const double raw = denom > 0.0 ? gap / denom : 0.0;
  return std::clamp(raw, 0.0, c / eta);
}

struct ShrinkTruncParams {
  double d = 20.0;
  double c = 0.5;
  double eta0 = 0.5;
  double epsilon = 1e-6;
};

/// Bet implied by the truncated shrinkage estimate of the mean:
/// η̂ = min(max((dη0 + S)/(d + n), η + c/√(d + n)), 1 - ε), λ = (η̂/η - 1)/(1 - η).
inline double shrink_trunc_bet(double running_sum, std::size_t n, double eta,
                               const ShrinkTruncParams& params) {
  const double weight = params.d + static_cast<double>(n);
  const double shrunk = (params.d * params.eta0 + running_sum) / weight;
  const double floor = eta + params.c / std::sqrt(weight);
  const double estimate = std::min(std::max(shrunk, floor), 1.0 - params.epsilon);
  const double bet = (estimate / eta - 1.0) / (1.0 - eta);
  return std::clamp(bet, 0.0, 1.0 / eta);
}

/// Rescaled overstatement population with no errors except a fraction p1 of
/// 1-vote and p2 of 2-vote overstatements.
inline ValueDistribution cobra_population(double p1, double p2) {
  if (p1 < 0.0 || p2 < 0.0 || p1 + p2 > 1.0) {
    throw Error(ErrorCode::InvalidConfig, "COBRA overstatement rates must be a sub-probability");
  }
  ValueDistribution dist;
  if (p2 > 0.0) {
    dist.support.push_back(0.0);
    dist.probability.push_back(p2);
  }
  if (p1 > 0.0) {
    dist.support.push_back(0.25);
    dist.probability.push_back(p1);
  }
  if (1.0 - p1 - p2 > 0.0) {
    dist.support.push_back(0.5);
    dist.probability.push_back(1.0 - p1 - p2);
  }
  return dist;
}

/// Fixed Kelly bet for the COBRA population at η = (2 - v)/4.
inline double cobra_bet(double v, double p1, double p2) {
  const double eta = (2.0 - v) / 4.0;
  return kelly_bet_bisection(cobra_population(p1, p2), eta, 1.0 / eta);
}

/// Equispaced grid λ_j = (j/D)(1/η), j = 1..D.
inline std::vector<double> universal_portfolio_grid(double eta, int grid_size) {
  if (grid_size < 1) throw Error(ErrorCode::InvalidConfig, "grid size must be at least 1");
  std::vector<double> grid(static_cast<std::size_t>(grid_size));
  for (int j = 1; j <= grid_size; ++j) {
    grid[static_cast<std::size_t>(j - 1)] = (static_cast<double>(j) / grid_size) / eta;
  }
  return grid;
}

/// log Σ exp(v) with the maximum shifted out.
inline double log_sum_exp(std::span<const double> logs) {
  double top = -std::numeric_limits<double>::infinity();
  for (double v : logs) top = std::max(top, v);
  if (!std::isfinite(top)) return top;
  double total = 0.0;
  for (double v : logs) total += std::exp(v - top);
  return top + std::log(total);
}

/// Average over the grid of D fixed-bet TSM wealths for a history sampled with replacement.
inline double universal_portfolio_wealth(std::span<const double> draws, double eta, int grid_size) {
  const auto grid = universal_portfolio_grid(eta, grid_size);
  std::vector<double> logs(grid.size(), 0.0);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    for (double x : draws) logs[j] += std::log1p(grid[j] * (x - eta));
  }
  return std::exp(log_sum_exp(logs) - std::log(static_cast<double>(grid.size())));
}

// ---------------------------------------------------------------------------
// Strategy descriptions

struct BetStrategy {
  StrategyKind kind = StrategyKind::fixed;
  double fixed_bet = 0.0;
  /// Population the Kelly variants optimise against: postulated for a priori,
  /// the true population for the oracle.
  std::vector<double> kelly_population;
  double agrapa_c = 0.99;
  int grid_size = 100;
  double shrink_d = 20.0;
  /// Truncation constant; 1/2 by default.
  double shrink_c = 0.5;
  /// Unset means 1/2, the rescaled mean when the reference values are exact.
  std::optional<double> shrink_eta0;
  double shrink_epsilon = 1e-6;
  double cobra_p1 = 0.0;
  double cobra_p2 = 0.001;

  static BetStrategy fixed(double bet) {
    BetStrategy s;
    s.kind = StrategyKind::fixed;
    s.fixed_bet = bet;
    return s;
  }
  static BetStrategy apriori_kelly(std::vector<double> postulated) {
    BetStrategy s;
    s.kind = StrategyKind::apriori_kelly;
    s.kelly_population = std::move(postulated);
    return s;
  }
  static BetStrategy oracle_kelly(std::vector<double> truth) {
    BetStrategy s;
    s.kind = StrategyKind::oracle_kelly;
    s.kelly_population = std::move(truth);
    return s;
  }
  static BetStrategy agrapa(double c = 0.99) {
    BetStrategy s;
    s.kind = StrategyKind::agrapa;
    s.agrapa_c = c;
    return s;
  }
  static BetStrategy universal_portfolio(int grid_size = 100) {
    BetStrategy s;
    s.kind = StrategyKind::universal_portfolio;
    s.grid_size = grid_size;
    return s;
  }
  static BetStrategy shrink_trunc(double d = 20.0, double c = 0.5,
                                  std::optional<double> eta0 = std::nullopt) {
    BetStrategy s;
    s.kind = StrategyKind::shrink_trunc;
    s.shrink_d = d;
    s.shrink_c = c;
    s.shrink_eta0 = eta0;
    return s;
  }
  static BetStrategy cobra(double p1 = 0.0, double p2 = 0.001) {
    BetStrategy s;
    s.kind = StrategyKind::cobra;
    s.cobra_p1 = p1;
    s.cobra_p2 = p2;
    return s;
  }

  std::string name() const { return std::string(to_string(kind)); }
};

/// A strategy with every null-dependent quantity resolved. Immutable and
/// shareable across concurrent audits.
struct PreparedStrategy {
  StrategyKind kind = StrategyKind::fixed;
  /// Null mean the bets are computed against (draws are treated as IID).
  double eta = 0.5;
  double constant_bet = 0.0;
  double agrapa_c = 0.99;
  std::vector<double> grid;
  ShrinkTruncParams shrink;
};

inline PreparedStrategy prepare(const BetStrategy& strategy, double eta) {
  if (!(eta > 0.0 && eta < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "null mean must lie in (0, 1)");
  }
  PreparedStrategy p;
  p.kind = strategy.kind;
  p.eta = eta;
  switch (strategy.kind) {
    case StrategyKind::fixed:
      if (!(strategy.fixed_bet >= 0.0 && strategy.fixed_bet <= 1.0 / eta)) {
        throw Error(ErrorCode::BetOutOfRange, "fixed bet outside [0, 1/eta]");
      }
      p.constant_bet = strategy.fixed_bet;
      break;
    case StrategyKind::apriori_kelly:
    case StrategyKind::oracle_kelly:
      if (strategy.kelly_population.empty()) {
        throw Error(ErrorCode::InvalidConfig, "Kelly strategy needs a population");
      }
      p.constant_bet = kelly_bet_bisection(strategy.kelly_population, eta);
      break;
    case StrategyKind::cobra: {
      // COBRA's population is phrased in rescaled overstatements: η = (2 - v)/4.
      const double v = 2.0 - 4.0 * eta;
      p.constant_bet = cobra_bet(v, strategy.cobra_p1, strategy.cobra_p2);
      break;
    }
    case StrategyKind::agrapa:
      if (!(strategy.agrapa_c >= 0.0 && strategy.agrapa_c <= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "AGRAPA c must lie in [0, 1]");
      }
      p.agrapa_c = strategy.agrapa_c;
      break;
    case StrategyKind::universal_portfolio:
      p.grid = universal_portfolio_grid(eta, strategy.grid_size);
      break;
    case StrategyKind::shrink_trunc: {
      if (!(strategy.shrink_d > 0.0)) throw Error(ErrorCode::InvalidConfig, "shrink d must be > 0");
      p.shrink.d = strategy.shrink_d;
      p.shrink.eta0 = strategy.shrink_eta0.value_or(0.5);
      if (!(strategy.shrink_c >= 0.0)) throw Error(ErrorCode::InvalidConfig, "shrink c must be >= 0");
      p.shrink.c = strategy.shrink_c;
      p.shrink.epsilon = strategy.shrink_epsilon;
      break;
    }
  }
  return p;
}

/// Per-audit betting state. bet() depends only on the draws passed to observe().
class Bettor {
 public:
  explicit Bettor(std::shared_ptr<const PreparedStrategy> strategy)
      : strategy_(std::move(strategy)) {
    if (strategy_->kind == StrategyKind::universal_portfolio) {
      log_weights_.assign(strategy_->grid.size(), 0.0);
    }
  }

  /// Bet for the next draw given the conditional null mean eta_j; always in [0, 1/eta_j].
  double bet(double eta_j) const {
    const double cap = eta_j > 0.0 ? 1.0 / eta_j : std::numeric_limits<double>::infinity();
    const double eta = strategy_->eta;
    switch (strategy_->kind) {
      case StrategyKind::fixed:
      case StrategyKind::apriori_kelly:
      case StrategyKind::oracle_kelly:
      case StrategyKind::cobra:
        return std::min(strategy_->constant_bet, cap);
      case StrategyKind::agrapa: {
        double mean_lag = eta + agrapa_startup_offset;
        double var_lag = agrapa_startup_variance;
        if (n_ >= 1) mean_lag = mean_;
        if (n_ >= 2) var_lag = m2_ / static_cast<double>(n_);
        return std::min(agrapa_bet(mean_lag, var_lag, eta, strategy_->agrapa_c), cap);
      }
      case StrategyKind::shrink_trunc:
        return std::min(shrink_trunc_bet(sum_, n_, eta, strategy_->shrink), cap);
      case StrategyKind::universal_portfolio:
        return mixture_bet(cap);
    }
    return 0.0;
  }

  void observe(double x, double eta_j) {
    if (strategy_->kind == StrategyKind::universal_portfolio) {
      const double cap = eta_j > 0.0 ? 1.0 / eta_j : std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < log_weights_.size(); ++j) {
        const double factor = 1.0 + std::min(strategy_->grid[j], cap) * (x - eta_j);
        log_weights_[j] += factor > 0.0 ? std::log(factor)
                                        : -std::numeric_limits<double>::infinity();
      }
    }
    ++n_;
    sum_ += x;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }

  std::size_t draws() const { return n_; }
  const PreparedStrategy& strategy() const { return *strategy_; }

 private:
  // Wealth-weighted average of the grid bets: one step of the mixture of
  // fixed-bet TSMs equals one step of a single TSM with this bet.
  double mixture_bet(double cap) const {
    double top = -std::numeric_limits<double>::infinity();
    for (double w : log_weights_) top = std::max(top, w);
    if (!std::isfinite(top)) return 0.0;
    double numer = 0.0;
    double denom = 0.0;
    for (std::size_t j = 0; j < log_weights_.size(); ++j) {
      const double w = std::exp(log_weights_[j] - top);
      numer += w * std::min(strategy_->grid[j], cap);
      denom += w;
    }
    return std::min(numer / denom, cap);
  }

  std::shared_ptr<const PreparedStrategy> strategy_;
  std::size_t n_ = 0;
  double sum_ = 0.0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  std::vector<double> log_weights_;
};

}  // namespace oneaudit
