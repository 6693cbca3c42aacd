#pragma once

// JSON configuration for population specs and simulation runs, plus the
// built-in presets used by `oneaudit simulate --preset`.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "oneaudit/error.hpp"
#include "oneaudit/popgen.hpp"
#include "oneaudit/simulation.hpp"

namespace oneaudit {

using nlohmann::json;

namespace detail {

inline const json& require_field(const json& j, std::string_view context, const char* name) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, std::string(context) + ": expected an object");
  auto it = j.find(name);
  if (it == j.end()) {
    throw Error(ErrorCode::ParseError, std::string(context) + ": missing field '" + name + "'");
  }
  return *it;
}

template <class T>
T field_as(const json& j, std::string_view context, const char* name) {
  const auto& value = require_field(j, context, name);
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::ParseError,
                std::string(context) + ": field '" + name + "' has the wrong type");
  }
}

template <class T>
T field_or(const json& j, std::string_view context, const char* name, T fallback) {
  if (!j.contains(name)) return fallback;
  return field_as<T>(j, context, name);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PopulationSpec

inline PopulationSpec population_spec_from_json(const json& j, std::string_view context = "spec") {
  using detail::field_as;
  using detail::field_or;
  PopulationSpec spec;
  spec.reported_mean = field_as<double>(j, context, "reported_mean");
  spec.across_gap = field_as<double>(j, context, "across_gap");
  spec.within_gap = field_as<double>(j, context, "within_gap");
  spec.n_cvr = field_as<std::size_t>(j, context, "n_cvr");
  spec.n_batch_cards = field_as<std::size_t>(j, context, "n_batch_cards");
  spec.batch_size = field_as<std::size_t>(j, context, "batch_size");
  spec.error_model = parse_error_model(field_or<std::string>(j, context, "error_model", "none"));
  spec.seed = field_or<std::uint64_t>(j, context, "seed", 0);
  return spec;
}

inline json to_json(const PopulationSpec& spec) {
  return json{{"reported_mean", spec.reported_mean},
              {"across_gap", spec.across_gap},
              {"within_gap", spec.within_gap},
              {"n_cvr", spec.n_cvr},
              {"n_batch_cards", spec.n_batch_cards},
              {"batch_size", spec.batch_size},
              {"error_model", std::string(to_string(spec.error_model))},
              {"seed", spec.seed}};
}

// ---------------------------------------------------------------------------
// Simulation runs

/// One strategy evaluated under one sampling design.
struct RunSpec {
  std::string strategy;
  SamplingDesign design;
};

/// A full simulation: every population crossed with every run, in order.
struct SimulationPlan {
  SimulationConfig config;
  std::vector<PopulationSpec> populations;
  std::vector<RunSpec> runs;
};

struct SimulationJob {
  std::size_t population = 0;
  RunSpec run;
};

/// Row order of the report: population-major, then run order.
inline std::vector<SimulationJob> expand_jobs(const SimulationPlan& plan) {
  std::vector<SimulationJob> jobs;
  for (std::size_t p = 0; p < plan.populations.size(); ++p) {
    for (const auto& run : plan.runs) jobs.push_back({p, run});
  }
  return jobs;
}

namespace detail {

inline SamplingDesign design_from_json(const json& j, std::string_view context) {
  SamplingDesign design;
  design.kind = parse_design_kind(field_as<std::string>(j, context, "kind"));
  design.cap = field_as<std::size_t>(j, context, "cap");
  return design;
}

inline json design_to_json(const SamplingDesign& design) {
  return json{{"kind", std::string(to_string(design.kind))}, {"cap", design.cap}};
}

}  // namespace detail

/// Accepts either {"design": ..., "strategies": [...]} (every strategy under
/// one design) or an explicit "runs" list of {strategy, design}.
inline SimulationPlan simulation_plan_from_json(const json& j) {
  using detail::field_as;
  using detail::field_or;
  const std::string_view ctx = "config";
  SimulationPlan plan;
  auto& c = plan.config;
  c.replications = field_as<std::size_t>(j, ctx, "replications");
  c.alpha = field_as<double>(j, ctx, "alpha");
  c.master_seed = field_or<std::uint64_t>(j, ctx, "master_seed", c.master_seed);
  c.grid_size = field_or<int>(j, ctx, "grid_size", c.grid_size);
  c.bands = field_or<int>(j, ctx, "bands", c.bands);
  c.threads = field_or<std::size_t>(j, ctx, "threads", c.threads);

  const auto& pops = detail::require_field(j, ctx, "populations");
  if (!pops.is_array() || pops.empty()) {
    throw Error(ErrorCode::ParseError, "config: field 'populations' must be a non-empty array");
  }
  for (std::size_t i = 0; i < pops.size(); ++i) {
    plan.populations.push_back(
        population_spec_from_json(pops[i], "config.populations[" + std::to_string(i) + "]"));
  }

  if (j.contains("runs")) {
    const auto& runs = j.at("runs");
    if (!runs.is_array() || runs.empty()) {
      throw Error(ErrorCode::ParseError, "config: field 'runs' must be a non-empty array");
    }
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const std::string rctx = "config.runs[" + std::to_string(i) + "]";
      plan.runs.push_back({field_as<std::string>(runs[i], rctx, "strategy"),
                           detail::design_from_json(detail::require_field(runs[i], rctx, "design"),
                                                    rctx + ".design")});
    }
  } else {
    const auto design = detail::design_from_json(detail::require_field(j, ctx, "design"), "config.design");
    const auto names = field_as<std::vector<std::string>>(j, ctx, "strategies");
    if (names.empty()) throw Error(ErrorCode::ParseError, "config: field 'strategies' is empty");
    for (const auto& name : names) plan.runs.push_back({name, design});
  }
  for (const auto& run : plan.runs) parse_strategy_kind(run.strategy);
  c.design = plan.runs.front().design;
  c.validate();
  return plan;
}

inline json to_json(const SimulationPlan& plan) {
  json pops = json::array();
  for (const auto& p : plan.populations) pops.push_back(to_json(p));
  json runs = json::array();
  for (const auto& r : plan.runs) {
    runs.push_back(json{{"strategy", r.strategy}, {"design", detail::design_to_json(r.design)}});
  }
  return json{{"replications", plan.config.replications},
              {"alpha", plan.config.alpha},
              {"master_seed", plan.config.master_seed},
              {"grid_size", plan.config.grid_size},
              {"bands", plan.config.bands},
              {"threads", plan.config.threads},
              {"populations", pops},
              {"runs", runs}};
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

inline SimulationPlan read_simulation_plan(const std::filesystem::path& path) {
  const auto j = read_json_file(path);
  try {
    return simulation_plan_from_json(j);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError) {
      throw Error(ErrorCode::ParseError, path.string() + ": " + e.message());
    }
    throw;
  }
}

inline PopulationSpec read_population_spec(const std::filesystem::path& path) {
  return population_spec_from_json(read_json_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Presets

inline const std::vector<std::string>& all_strategy_names() {
  static const std::vector<std::string> names{"oracle_kelly", "apriori_kelly",       "agrapa",
                                              "universal_portfolio", "shrink_trunc", "cobra"};
  return names;
}

namespace detail {

inline std::vector<PopulationSpec> gap_grid(double reported_mean, ErrorModel errors,
                                            std::size_t n_cvr, std::size_t n_batch_cards,
                                            std::size_t batch_size) {
  std::vector<PopulationSpec> out;
  for (double across : {0.0, 0.5}) {
    for (double within : {0.0, 0.5}) {
      PopulationSpec spec;
      spec.reported_mean = reported_mean;
      spec.across_gap = across;
      spec.within_gap = within;
      spec.n_cvr = n_cvr;
      spec.n_batch_cards = n_batch_cards;
      spec.batch_size = batch_size;
      spec.error_model = errors;
      out.push_back(spec);
    }
  }
  return out;
}

inline void append(std::vector<PopulationSpec>& to, std::vector<PopulationSpec> more) {
  to.insert(to.end(), more.begin(), more.end());
}

}  // namespace detail

inline std::vector<std::string> preset_names() {
  return {"table1", "table1-0.600", "table2", "table2-0.600", "table2-0.550", "table2-desk"};
}

/// table1*: 10k CVR cards and 10 batches of 1000; unstratified oracle TSM vs
/// stratified UI-TS, both with replacement and capped at 20k.
/// table2*: 100k CVR cards and 100 batches of 1000, every strategy, without
/// replacement. The desk preset shrinks both strata tenfold.
inline SimulationPlan preset(std::string_view name) {
  SimulationPlan plan;
  auto& c = plan.config;
  c.alpha = 0.05;
  if (name == "table1" || name == "table1-0.600") {
    c.replications = 1000;
    const SamplingDesign with{DesignKind::srs_with_replacement, 20000};
    const SamplingDesign stratified{DesignKind::stratified_proportional_round_robin, 20000};
    plan.runs = {{"oracle_kelly", with}, {"oracle_kelly", stratified}};
    if (name == "table1") {
      for (double mean : {0.505, 0.525, 0.55, 0.6}) {
        detail::append(plan.populations, detail::gap_grid(mean, ErrorModel::none, 10000, 10000, 1000));
      }
    } else {
      plan.populations = detail::gap_grid(0.6, ErrorModel::none, 10000, 10000, 1000);
      plan.populations.resize(1);
    }
  } else if (name == "table2" || name == "table2-0.600" || name == "table2-0.550") {
    c.replications = 1000;
    const SamplingDesign without{DesignKind::srs_without_replacement, 200000};
    for (const auto& s : all_strategy_names()) plan.runs.push_back({s, without});
    if (name == "table2") {
      for (double mean : {0.505, 0.51, 0.55, 0.6}) {
        detail::append(plan.populations, detail::gap_grid(mean, ErrorModel::halve_margin, 100000, 100000, 1000));
        detail::append(plan.populations, detail::gap_grid(mean, ErrorModel::none, 100000, 100000, 1000));
      }
    } else {
      const double mean = name == "table2-0.600" ? 0.6 : 0.55;
      plan.populations = detail::gap_grid(mean, ErrorModel::none, 100000, 100000, 1000);
      plan.populations.resize(1);
    }
  } else if (name == "table2-desk") {
    c.replications = 500;
    const SamplingDesign without{DesignKind::srs_without_replacement, 20000};
    for (const auto& s : all_strategy_names()) plan.runs.push_back({s, without});
    for (double mean : {0.55, 0.6}) {
      detail::append(plan.populations, detail::gap_grid(mean, ErrorModel::none, 10000, 10000, 1000));
    }
  } else {
    throw Error(ErrorCode::InvalidConfig, "unknown preset '" + std::string(name) + "'");
  }
  c.design = plan.runs.front().design;
  return plan;
}

// ---------------------------------------------------------------------------
// Running a plan

/// Runs every job of the plan. Each population is generated once; every run
/// on it shares the replication seeds.
inline SimulationReport run_plan(const SimulationPlan& plan,
                                 const std::function<void(const ReportRow&)>& on_row = {}) {
  plan.config.validate();
  SimulationReport report;
  for (const auto& spec : plan.populations) {
    const Election election = build_population(spec);
    for (const auto& run : plan.runs) {
      SimulationConfig config = plan.config;
      config.design = run.design;
      if (config.design.kind == DesignKind::srs_without_replacement) {
        config.design.cap = std::min(config.design.cap, election.size());
      }
      report.push_back(estimate_stopping(config, election, run.strategy));
      if (on_row) on_row(report.back());
    }
  }
  return report;
}

}  // namespace oneaudit
