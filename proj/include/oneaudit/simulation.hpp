#pragma once

// Monte Carlo estimation of audit stopping times.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "oneaudit/audit.hpp"
#include "oneaudit/error.hpp"
#include "oneaudit/popgen.hpp"
#include "oneaudit/sampling.hpp"
#include "oneaudit/strategies.hpp"
#include "oneaudit/stratified.hpp"

namespace oneaudit {

enum class DesignKind {
  srs_with_replacement,
  srs_without_replacement,
  stratified_proportional_round_robin,
};

constexpr std::string_view to_string(DesignKind kind) {
  switch (kind) {
    case DesignKind::srs_with_replacement: return "srs_with_replacement";
    case DesignKind::srs_without_replacement: return "srs_without_replacement";
    case DesignKind::stratified_proportional_round_robin:
      return "stratified_proportional_round_robin";
  }
  return "srs_with_replacement";
}

inline DesignKind parse_design_kind(std::string_view text) {
  for (auto kind : {DesignKind::srs_with_replacement, DesignKind::srs_without_replacement,
                    DesignKind::stratified_proportional_round_robin}) {
    if (text == to_string(kind)) return kind;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown sampling design '" + std::string(text) + "'");
}

struct SamplingDesign {
  DesignKind kind = DesignKind::srs_with_replacement;
  std::size_t cap = 20000;

  SamplingMode mode() const {
    return kind == DesignKind::srs_without_replacement ? SamplingMode::without_replacement
                                                       : SamplingMode::with_replacement;
  }
};

struct SimulationConfig {
  std::size_t replications = 1000;
  double alpha = 0.05;
  std::uint64_t master_seed = 20240611;
  SamplingDesign design;
  /// Universal-portfolio grid size and UI-TS band count.
  int grid_size = 100;
  int bands = 100;
  /// 0 means one worker per hardware thread.
  std::size_t threads = 0;

  void validate() const {
    if (replications < 1) throw Error(ErrorCode::InvalidConfig, "replications must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidConfig, "alpha must lie in (0, 1)");
    if (design.cap < 1) throw Error(ErrorCode::InvalidConfig, "cap must be >= 1");
    if (grid_size < 1) throw Error(ErrorCode::InvalidConfig, "grid size must be >= 1");
    if (bands < 1) throw Error(ErrorCode::InvalidConfig, "band count must be >= 1");
  }
};

struct ReportRow {
  double reported_mean = 0.0;
  double true_mean = 0.0;
  double across_gap = 0.0;
  double within_gap = 0.0;
  std::string strategy;
  std::string design;
  double mean = 0.0;
  double q90 = 0.0;
  double capped_fraction = 0.0;
  double rejection_rate = 0.0;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> stopping_times;

  /// Monte Carlo standard error of the mean stopping time.
  double standard_error() const {
    if (stopping_times.size() < 2) return 0.0;
    double ss = 0.0;
    for (auto t : stopping_times) ss += (static_cast<double>(t) - mean) * (static_cast<double>(t) - mean);
    const double n = static_cast<double>(stopping_times.size());
    return std::sqrt(ss / (n - 1.0) / n);
  }

  bool operator==(const ReportRow&) const = default;
};

using SimulationReport = std::vector<ReportRow>;

/// Nearest-rank empirical quantile.
inline double nearest_rank_quantile(std::vector<std::size_t> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return static_cast<double>(values[rank - 1]);
}

/// Runs fn(i) for i in [0, n) on a small pool; callers write results by index.
inline void parallel_for(std::size_t n, std::size_t threads,
                         const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Ordered card indices for one replication of an unstratified design.
inline std::vector<std::size_t> draw_sample_stream(const SamplingDesign& design,
                                                   std::size_t population_size,
                                                   std::uint64_t seed) {
  switch (design.kind) {
    case DesignKind::srs_with_replacement:
      return collect(IidSource(population_size, design.cap, seed));
    case DesignKind::srs_without_replacement:
      return collect(PermutationSource(population_size, design.cap, seed));
    case DesignKind::stratified_proportional_round_robin:
      break;
  }
  throw Error(ErrorCode::InvalidConfig, "stratified streams need stratum sizes and weights");
}

/// Labelled stream for the stratified design; identical to the draws made by
/// run_stratified_audit with the same seed.
inline std::vector<LabeledDraw> draw_stratified_stream(std::span<const std::size_t> stratum_sizes,
                                                       std::span<const double> weights,
                                                       std::size_t cap, std::uint64_t seed) {
  if (stratum_sizes.size() != kStrata || weights.size() != kStrata) {
    throw Error(ErrorCode::InvalidConfig, "exactly two strata");
  }
  RoundRobinScheduler scheduler({weights[0], weights[1]});
  std::array<Rng, kStrata> rngs{Rng(splitmix64(seed)), Rng(splitmix64(seed ^ 0xA5A5A5A5ULL))};
  std::vector<LabeledDraw> out;
  out.reserve(cap);
  for (std::size_t t = 0; t < cap; ++t) {
    const int k = scheduler.next();
    out.push_back({k, rngs[static_cast<std::size_t>(k)].uniform_index(stratum_sizes[static_cast<std::size_t>(k)])});
  }
  return out;
}

inline ReportRow summarize(std::vector<std::size_t> stopping_times, std::size_t confirmed,
                           std::size_t cap) {
  ReportRow row;
  row.reps = stopping_times.size();
  double total = 0.0;
  for (auto t : stopping_times) total += static_cast<double>(t);
  row.mean = row.reps ? total / static_cast<double>(row.reps) : 0.0;
  row.q90 = nearest_rank_quantile(stopping_times, 0.9);
  row.rejection_rate = row.reps ? static_cast<double>(confirmed) / static_cast<double>(row.reps) : 0.0;
  row.capped_fraction = 1.0 - row.rejection_rate;
  row.mean = std::min(row.mean, static_cast<double>(cap));
  row.stopping_times = std::move(stopping_times);
  return row;
}

/// Unstratified Monte Carlo: every replication draws its own stream from
/// replication_seed(master_seed, rep). Replications share seeds across
/// strategies, so strategy comparisons use common random numbers.
inline ReportRow estimate_stopping(const SimulationConfig& config,
                                   const AssorterPopulation& population,
                                   const BetStrategy& strategy) {
  config.validate();
  population.validate();
  if (config.design.kind == DesignKind::stratified_proportional_round_robin) {
    throw Error(ErrorCode::InvalidConfig, "use estimate_stratified_stopping for stratified designs");
  }
  if (config.design.kind == DesignKind::srs_without_replacement && config.design.cap > population.size()) {
    throw Error(ErrorCode::InvalidConfig, "cap exceeds the population size for sampling without replacement");
  }
  auto prepared = std::make_shared<const PreparedStrategy>(prepare(strategy, population.null_mean));
  AuditOptions options{config.alpha, config.design.cap, config.design.mode(), false};

  std::vector<std::size_t> times(config.replications);
  std::vector<char> confirmed(config.replications, 0);
  parallel_for(config.replications, config.threads, [&](std::size_t rep) {
    const std::uint64_t seed = replication_seed(config.master_seed, rep);
    AuditResult result;
    if (config.design.kind == DesignKind::srs_with_replacement) {
      result = run_audit(population, IidSource(population.size(), config.design.cap, seed), prepared, options);
    } else {
      result = run_audit(population, PermutationSource(population.size(), config.design.cap, seed), prepared, options);
    }
    times[rep] = result.stopping_time;
    confirmed[rep] = result.confirmed ? 1 : 0;
  });
  const auto hits = static_cast<std::size_t>(std::count(confirmed.begin(), confirmed.end(), 1));
  ReportRow row = summarize(std::move(times), hits, config.design.cap);
  row.strategy = strategy.name();
  row.design = std::string(to_string(config.design.kind));
  row.seed = config.master_seed;
  return row;
}

/// Stratified UI-TS Monte Carlo with fixed per-band Kelly bets computed from
/// `bet_strata` (true strata for the oracle, postulated for a priori).
inline ReportRow estimate_stratified_stopping(const SimulationConfig& config,
                                              std::span<const StratumSpec> strata,
                                              const std::array<ValueDistribution, kStrata>& bet_strata,
                                              double global_eta) {
  config.validate();
  const auto segment = null_boundary(strata[0].weight, strata[1].weight, global_eta);
  const auto bands = band_partition(segment, config.bands, kelly_stratum_bets(bet_strata));

  std::vector<std::size_t> times(config.replications);
  std::vector<char> confirmed(config.replications, 0);
  parallel_for(config.replications, config.threads, [&](std::size_t rep) {
    const auto result = run_stratified_audit(strata, bands, config.alpha, config.design.cap,
                                             replication_seed(config.master_seed, rep));
    times[rep] = result.stopping_time;
    confirmed[rep] = result.confirmed ? 1 : 0;
  });
  const auto hits = static_cast<std::size_t>(std::count(confirmed.begin(), confirmed.end(), 1));
  ReportRow row = summarize(std::move(times), hits, config.design.cap);
  row.design = std::string(to_string(DesignKind::stratified_proportional_round_robin));
  row.seed = config.master_seed;
  return row;
}

/// Resolves a strategy name against a generated election. Kelly variants use
/// the true population (oracle) or the population implied by the reported
/// CVRs and batch tallies (a priori).
inline BetStrategy strategy_for(std::string_view name, const Election& election, int grid_size) {
  switch (parse_strategy_kind(name)) {
    case StrategyKind::oracle_kelly: return BetStrategy::oracle_kelly(election.population.values);
    case StrategyKind::apriori_kelly: return BetStrategy::apriori_kelly(election.postulated.values);
    case StrategyKind::agrapa: return BetStrategy::agrapa();
    case StrategyKind::universal_portfolio: return BetStrategy::universal_portfolio(grid_size);
    case StrategyKind::shrink_trunc: return BetStrategy::shrink_trunc();
    case StrategyKind::cobra: return BetStrategy::cobra();
    case StrategyKind::fixed: break;
  }
  throw Error(ErrorCode::InvalidConfig, "a fixed bet needs an explicit value");
}

inline void label_row(ReportRow& row, const Election& election) {
  row.reported_mean = election.spec.reported_mean;
  row.true_mean = election.true_mean();
  row.across_gap = election.spec.across_gap;
  row.within_gap = election.spec.within_gap;
}

/// One report row for a generated election, a strategy name and the configured design.
inline ReportRow estimate_stopping(const SimulationConfig& config, const Election& election,
                                   std::string_view strategy_name) {
  ReportRow row;
  if (config.design.kind == DesignKind::stratified_proportional_round_robin) {
    const auto kind = parse_strategy_kind(strategy_name);
    if (kind != StrategyKind::oracle_kelly && kind != StrategyKind::apriori_kelly) {
      throw Error(ErrorCode::InvalidConfig,
                  "the stratified design supports oracle_kelly and apriori_kelly band bets only");
    }
    const double n = static_cast<double>(election.size());
    std::array<StratumSpec, kStrata> strata{
        StratumSpec{election.stratum(0), static_cast<double>(election.spec.n_cvr) / n},
        StratumSpec{election.stratum(1), static_cast<double>(election.spec.n_batch_cards) / n}};
    const AssorterPopulation& source =
        kind == StrategyKind::oracle_kelly ? election.population : election.postulated;
    std::array<std::vector<double>, kStrata> split;
    for (std::size_t i = 0; i < source.size(); ++i) {
      split[static_cast<std::size_t>(source.labels[i])].push_back(source.values[i]);
    }
    std::array<ValueDistribution, kStrata> bet_strata{ValueDistribution::from_values(split[0]),
                                                      ValueDistribution::from_values(split[1])};
    row = estimate_stratified_stopping(config, strata, bet_strata, election.eta);
    row.strategy = std::string(strategy_name);
  } else {
    row = estimate_stopping(config, election.population,
                            strategy_for(strategy_name, election, config.grid_size));
  }
  label_row(row, election);
  return row;
}

// ---------------------------------------------------------------------------
// CSV report

inline constexpr std::string_view kReportHeader =
    "reported_mean,true_mean,across_gap,within_gap,strategy,design,mean,q90,capped_fraction,reps,seed";

inline void write_report(std::ostream& out, const SimulationReport& report) {
  out << kReportHeader << '\n';
  char buf[256];
  for (const auto& row : report) {
    std::snprintf(buf, sizeof buf, "%.4f,%.4f,%.3f,%.3f,", row.reported_mean, row.true_mean,
                  row.across_gap, row.within_gap);
    out << buf << row.strategy << ',' << row.design << ',';
    std::snprintf(buf, sizeof buf, "%.3f,%.0f,%.4f,%zu,%llu", row.mean, row.q90, row.capped_fraction,
                  row.reps, static_cast<unsigned long long>(row.seed));
    out << buf << '\n';
  }
}

inline void table_emit(const SimulationReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  write_report(out, report);
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

}  // namespace oneaudit
