#pragma once

// Kelly-optimal constant bets for a postulated population sampled with replacement.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace oneaudit {

/// A population collapsed to its distinct values and their frequencies.
/// ONEAudit populations have few distinct values, so every sum below runs over
/// the support rather than the cards.
struct ValueDistribution {
  std::vector<double> support;
  std::vector<double> probability;

  static ValueDistribution from_values(std::span<const double> values) {
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    ValueDistribution dist;
    const double n = static_cast<double>(sorted.size());
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
      dist.support.push_back(sorted[i]);
      dist.probability.push_back(static_cast<double>(j - i) / n);
      i = j;
    }
    return dist;
  }

  double mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < support.size(); ++i) m += support[i] * probability[i];
    return m;
  }
};

/// d/dλ E log(1 + λ(X - η)); -inf once some factor reaches zero.
inline double kelly_derivative(const ValueDistribution& dist, double eta, double bet) {
  double total = 0.0;
  for (std::size_t i = 0; i < dist.support.size(); ++i) {
    const double gap = dist.support[i] - eta;
    const double factor = 1.0 + bet * gap;
    if (factor <= 0.0) return -std::numeric_limits<double>::infinity();
    total += dist.probability[i] * gap / factor;
  }
  return total;
}

inline double expected_log_growth(const ValueDistribution& dist, double eta, double bet) {
  double total = 0.0;
  for (std::size_t i = 0; i < dist.support.size(); ++i) {
    const double factor = 1.0 + bet * (dist.support[i] - eta);
    if (factor <= 0.0) return -std::numeric_limits<double>::infinity();
    total += dist.probability[i] * std::log(factor);
  }
  return total;
}

inline double expected_log_growth(std::span<const double> values, double eta, double bet) {
  return expected_log_growth(ValueDistribution::from_values(values), eta, bet);
}

struct KellyOptions {
  double tolerance = 1e-10;
  int max_iterations = 200;
};

/// Root of the Kelly first-order condition on [0, max_bet] by bisection.
/// Returns 0 when the game is not favourable (ties resolve to 0) and max_bet
/// when the derivative stays positive on the whole interval.
inline double kelly_bet_bisection(const ValueDistribution& dist, double eta, double max_bet,
                                  KellyOptions options = {}) {
  if (dist.support.empty() || !(max_bet > 0.0)) return 0.0;
  if (kelly_derivative(dist, eta, 0.0) <= 0.0) return 0.0;
  if (kelly_derivative(dist, eta, max_bet) >= 0.0) return max_bet;

  double lo = 0.0;
  double hi = max_bet;
  for (int i = 0; i < options.max_iterations && hi - lo > options.tolerance; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (kelly_derivative(dist, eta, mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

inline double kelly_bet_bisection(std::span<const double> postulated, double eta,
                                  KellyOptions options = {}) {
  return kelly_bet_bisection(ValueDistribution::from_values(postulated), eta, 1.0 / eta, options);
}

}  // namespace oneaudit
