#pragma once

// Sequential audit driver shared by simulations and live sessions.

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "oneaudit/assorter.hpp"
#include "oneaudit/error.hpp"
#include "oneaudit/sampling.hpp"
#include "oneaudit/strategies.hpp"
#include "oneaudit/tsm.hpp"

namespace oneaudit {

enum class AuditStatus { running, confirmed, escalate };

struct StepRecord {
  std::size_t t = 0;
  std::size_t index = 0;
  double x = 0.0;
  double bet = 0.0;
  double eta_j = 0.0;
  double wealth = 1.0;
  double p_value = 1.0;
};

/// One assertion under test. Processes draws one at a time; the audit stops
/// when the p-value reaches alpha (confirmed) or when no further evidence can
/// confirm it (escalate to a full hand count).
class SequentialAudit {
 public:
  SequentialAudit(std::shared_ptr<const PreparedStrategy> strategy, std::size_t population_size,
                  SamplingMode mode, double alpha, std::size_t cap)
      : tracker_(strategy->eta, population_size, mode),
        bettor_(std::move(strategy)),
        alpha_(alpha),
        cap_(cap) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
      throw Error(ErrorCode::InvalidConfig, "alpha must lie in (0, 1)");
    }
    if (cap == 0) throw Error(ErrorCode::InvalidConfig, "cap must be positive");
  }

  /// Bet the strategy will place on the next draw.
  double next_bet() const { return bettor_.bet(tracker_.current()); }
  double current_null_mean() const { return tracker_.current(); }

  StepRecord step(double x, std::size_t index = 0) {
    if (status_ != AuditStatus::running) {
      throw Error(ErrorCode::InvalidState, "audit already finished");
    }
    const double eta_j = tracker_.current();
    const double bet = bettor_.bet(eta_j);
    state_ = tsm_step(state_, x, bet, eta_j);
    bettor_.observe(x, eta_j);

    tracker_.update(x);
    switch (tracker_.status()) {
      case NullStatus::impossible: state_.terminal = TsmTerminal::rejected_certain; break;
      case NullStatus::saturated: state_.terminal = TsmTerminal::frozen; break;
      default: break;
    }

    const double p = p_value(state_);
    if (p <= alpha_) {
      status_ = AuditStatus::confirmed;
    } else if (state_.wealth <= 0.0 || state_.terminal == TsmTerminal::frozen ||
               tracker_.status() == NullStatus::exhausted || state_.t >= cap_) {
      status_ = AuditStatus::escalate;
    }
    return StepRecord{state_.t, index, x, bet, eta_j, state_.wealth, p};
  }

  /// Marks the audit as escalated when the sample stream runs out.
  void exhaust() {
    if (status_ == AuditStatus::running) status_ = AuditStatus::escalate;
  }

  AuditStatus status() const { return status_; }
  const TsmState& state() const { return state_; }
  const NullTracker& tracker() const { return tracker_; }
  double p() const { return p_value(state_); }
  double alpha() const { return alpha_; }
  std::size_t cap() const { return cap_; }

 private:
  NullTracker tracker_;
  Bettor bettor_;
  TsmState state_;
  double alpha_;
  std::size_t cap_;
  AuditStatus status_ = AuditStatus::running;
};

struct AuditResult {
  /// Draws examined before confirming, or the cap when the audit escalates.
  std::size_t stopping_time = 0;
  bool confirmed = false;
  std::size_t draws = 0;
  double final_p_value = 1.0;
  std::vector<StepRecord> trajectory;
};

struct AuditOptions {
  double alpha = 0.05;
  std::size_t cap = 20000;
  SamplingMode mode = SamplingMode::with_replacement;
  bool record_trajectory = false;
};

template <SampleSource Source>
AuditResult run_audit(const AssorterPopulation& population, Source source,
                      std::shared_ptr<const PreparedStrategy> strategy,
                      const AuditOptions& options) {
  SequentialAudit audit(std::move(strategy), population.size(), options.mode, options.alpha,
                        options.cap);
  AuditResult result;
  while (audit.status() == AuditStatus::running) {
    const auto index = source.next();
    if (!index) {
      audit.exhaust();
      break;
    }
    if (*index >= population.size()) {
      throw Error(ErrorCode::InvalidConfig, "sample index outside the population");
    }
    const auto record = audit.step(population.values[*index], *index);
    if (options.record_trajectory) result.trajectory.push_back(record);
  }
  result.draws = audit.state().t;
  result.confirmed = audit.status() == AuditStatus::confirmed;
  result.stopping_time = result.confirmed ? audit.state().t : options.cap;
  result.final_p_value = audit.p();
  return result;
}

inline AuditResult run_audit(const AssorterPopulation& population,
                             std::span<const std::size_t> stream, const BetStrategy& strategy,
                             const AuditOptions& options) {
  auto prepared = std::make_shared<const PreparedStrategy>(prepare(strategy, population.null_mean));
  return run_audit(population, SpanSource(stream), std::move(prepared), options);
}

}  // namespace oneaudit
