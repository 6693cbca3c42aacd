#pragma once

// Betting test supermartingale state, conditional null means and sequential p-values.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include "oneaudit/error.hpp"

namespace oneaudit {

enum class SamplingMode { with_replacement, without_replacement };

enum class NullStatus {
  running,
  /// The draws so far already exceed everything the null allows.
  impossible,
  /// The conditional null mean reached the upper bound; no future draw can count against it.
  saturated,
  /// Every card has been drawn.
  exhausted,
};

/// Tracks the conditional null mean η_j before each draw.
///
/// With replacement η_j stays at η. Without replacement
/// η_j = (Nη - Σ_{ℓ<j} X_ℓ) / (N - j + 1).
class NullTracker {
 public:
  static constexpr double tolerance = 1e-9;

  NullTracker(double eta0, std::size_t population_size, SamplingMode mode)
      : eta0_(eta0),
        total_null_(eta0 * static_cast<double>(population_size)),
        population_size_(population_size),
        mode_(mode),
        current_(eta0) {}

  double eta0() const { return eta0_; }
  double total_null() const { return total_null_; }
  double running_sum() const { return sum_ + compensation_; }
  std::size_t n_drawn() const { return n_drawn_; }
  std::size_t population_size() const { return population_size_; }
  SamplingMode mode() const { return mode_; }
  NullStatus status() const { return status_; }

  /// Null mean that applies to the next draw.
  double current() const { return current_; }

  /// Records a draw and returns the null mean for the following one.
  double update(double x) {
    ++n_drawn_;
    add_to_sum(x);
    if (mode_ == SamplingMode::with_replacement) return current_;

    if (n_drawn_ >= population_size_) {
      status_ = total_null_ - running_sum() < -tolerance ? NullStatus::impossible
                                                          : NullStatus::exhausted;
      return current_;
    }
    const double remaining = static_cast<double>(population_size_ - n_drawn_);
    const double eta = (total_null_ - running_sum()) / remaining;
    if (eta < -tolerance) {
      status_ = NullStatus::impossible;
      current_ = eta;
    } else if (eta >= 1.0) {
      status_ = NullStatus::saturated;
      current_ = eta;
    } else {
      current_ = std::max(eta, 0.0);
    }
    return current_;
  }

 private:
  // Neumaier summation; the tracker subtracts two nearly equal totals late in a draw.
  void add_to_sum(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      compensation_ += (sum_ - t) + x;
    } else {
      compensation_ += (x - t) + sum_;
    }
    sum_ = t;
  }

  double eta0_;
  double total_null_;
  std::size_t population_size_;
  SamplingMode mode_;
  double current_;
  double sum_ = 0.0;
  double compensation_ = 0.0;
  std::size_t n_drawn_ = 0;
  NullStatus status_ = NullStatus::running;
};

inline double null_mean_update(NullTracker& tracker, double x) { return tracker.update(x); }

enum class TsmTerminal { running, rejected_certain, frozen };

struct TsmState {
  std::size_t t = 0;
  double wealth = 1.0;
  double max_wealth = 1.0;
  TsmTerminal terminal = TsmTerminal::running;
  // Welford accumulators over the draws processed so far.
  double history_mean = 0.0;
  double history_m2 = 0.0;

  /// Population-style variance of the draws processed so far.
  double history_var() const { return t == 0 ? 0.0 : history_m2 / static_cast<double>(t); }
};

/// Multiplies wealth by 1 + λ(x - η_j). A bet outside [0, 1/η_j] is a bug in
/// the caller and is reported, not clipped.
inline TsmState tsm_step(const TsmState& state, double x, double bet, double eta_j) {
  const double max_bet = eta_j > 0.0 ? 1.0 / eta_j : std::numeric_limits<double>::infinity();
  if (!(bet >= 0.0) || bet > max_bet * (1.0 + 1e-12)) {
    throw Error(ErrorCode::BetOutOfRange, "bet " + std::to_string(bet) + " outside [0, " +
                                              std::to_string(max_bet) + "] at null mean " +
                                              std::to_string(eta_j));
  }
  if (!(x >= 0.0 && x <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "draw " + std::to_string(x) + " outside [0, 1]");
  }
  TsmState next = state;
  next.t = state.t + 1;
  next.wealth = std::max(0.0, state.wealth * (1.0 + bet * (x - eta_j)));
  next.max_wealth = std::max(state.max_wealth, next.wealth);
  const double delta = x - state.history_mean;
  next.history_mean = state.history_mean + delta / static_cast<double>(next.t);
  next.history_m2 = state.history_m2 + delta * (x - next.history_mean);
  return next;
}

/// Sequentially valid p-value, min(1, 1/max_t M_t).
inline double p_value(const TsmState& state) {
  if (state.terminal == TsmTerminal::rejected_certain) return 0.0;
  return std::min(1.0, 1.0 / state.max_wealth);
}

}  // namespace oneaudit
