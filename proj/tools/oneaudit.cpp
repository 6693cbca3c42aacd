// oneaudit: population generation, simulation, Kelly bets and live audit sessions.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oneaudit/config.hpp"
#include "oneaudit/io.hpp"
#include "oneaudit/kelly.hpp"
#include "oneaudit/service.hpp"
#include "oneaudit/session.hpp"
#include "oneaudit/simulation.hpp"

namespace fs = std::filesystem;
using namespace oneaudit;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<std::size_t> cap;
  std::vector<std::string> strategies;
  std::optional<int> grid_size;
  std::optional<int> bands;
  std::optional<std::size_t> reps;
  std::string out;
};

// ---------------------------------------------------------------------------

int cmd_generate(const std::string& spec_path, const Common& opt) {
  PopulationSpec spec = read_population_spec(spec_path);
  if (opt.seed) spec.seed = *opt.seed;
  const Election election = build_population(spec);
  const fs::path dir = opt.out.empty() ? fs::path("population") : fs::path(opt.out);
  write_election(election, dir);
  std::printf("wrote %zu cards to %s\n", election.size(), dir.string().c_str());
  std::printf("v = %.12g  eta = %.12g  reported mean = %.6f  true mean = %.6f\n", election.v,
              election.eta, election.refs.reported_mean, election.true_mean());
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const std::string& config_path, const std::string& preset_name,
                 std::optional<std::size_t> threads, bool quiet, const Common& opt) {
  if (config_path.empty() == preset_name.empty()) {
    throw Error(ErrorCode::InvalidConfig, "give exactly one of a config file or --preset");
  }
  SimulationPlan plan = preset_name.empty() ? read_simulation_plan(config_path) : preset(preset_name);
  auto& c = plan.config;
  if (opt.seed) c.master_seed = *opt.seed;
  if (opt.alpha) c.alpha = *opt.alpha;
  if (opt.reps) c.replications = *opt.reps;
  if (opt.grid_size) c.grid_size = *opt.grid_size;
  if (opt.bands) c.bands = *opt.bands;
  if (threads) c.threads = *threads;
  if (opt.cap) {
    for (auto& run : plan.runs) run.design.cap = *opt.cap;
  }
  if (!opt.strategies.empty()) {
    std::vector<RunSpec> kept;
    for (const auto& run : plan.runs) {
      for (const auto& s : opt.strategies) {
        if (run.strategy == s) kept.push_back(run);
      }
    }
    if (kept.empty()) throw Error(ErrorCode::InvalidConfig, "--strategy filtered out every run");
    plan.runs = std::move(kept);
  }
  c.design = plan.runs.front().design;
  c.validate();

  const auto report = run_plan(plan, [&](const ReportRow& row) {
    if (quiet) return;
    std::fprintf(stderr, "A^c=%.3f A^m=%.4f da=%.1f dw=%.1f %-20s %-36s mean=%.1f q90=%.0f\n",
                 row.reported_mean, row.true_mean, row.across_gap, row.within_gap,
                 row.strategy.c_str(), row.design.c_str(), row.mean, row.q90);
  });
  if (opt.out.empty()) {
    write_report(std::cout, report);
  } else {
    table_emit(report, opt.out);
  }
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_kelly(const std::string& csv_path, std::optional<double> eta, std::optional<double> max_bet) {
  if (!eta) {
    const fs::path manifest = fs::path(csv_path).parent_path() / "manifest.json";
    if (!fs::exists(manifest)) {
      throw Error(ErrorCode::InvalidConfig, "--eta is required when no manifest.json sits next to the file");
    }
    eta = read_manifest(manifest).eta;
  }
  if (!(*eta > 0.0 && *eta < 1.0)) throw Error(ErrorCode::InvalidConfig, "eta must lie in (0, 1)");
  const auto pop = read_population_csv(csv_path, *eta);
  const auto dist = ValueDistribution::from_values(pop.values);
  const double cap = max_bet.value_or(1.0 / *eta);
  const double lambda = kelly_bet_bisection(dist, *eta, cap);
  std::printf("lambda* = %.12g\n", lambda);
  std::printf("expected log growth = %.12g\n", expected_log_growth(dist, *eta, lambda));
  return 0;
}

// ---------------------------------------------------------------------------

void print_status(const AuditSession& s) {
  std::printf("draws %zu  p-value %s  wealth %s  status %s\n", s.entries().size(),
              decimal12(s.p_value()).c_str(), decimal12(s.wealth()).c_str(),
              std::string(to_string(s.status())).c_str());
}

void print_next(const AuditSession& s) {
  if (const auto index = s.next_index()) {
    const auto& card = s.election().cards[*index];
    std::printf("next card #%zu: %s%s%s\n", s.entries().size() + 1, card.card_id.c_str(),
                card.batch_id ? "  (batch " : "", card.batch_id ? (*card.batch_id + ")").c_str() : "");
  }
}

int cmd_audit(const std::string& election_path, const std::string& log_path, const Common& opt) {
  fs::path cards = election_path;
  if (fs::is_directory(cards)) cards /= "cards.csv";
  auto election = std::make_shared<const ElectionData>(read_cards_csv(cards));

  SessionParams params;
  params.strategy = opt.strategies.empty() ? "apriori_kelly" : opt.strategies.front();
  params.alpha = opt.alpha.value_or(0.05);
  params.seed = opt.seed.value_or(0);
  params.cap = opt.cap.value_or(0);
  params.grid_size = opt.grid_size.value_or(100);
  params.election = election_path;
  AuditSession session("terminal", election, params);

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path, std::ios::app);
    if (!log) throw Error(ErrorCode::IoError, "cannot open " + log_path);
    log << nlohmann::json{{"type", "start"}, {"params", session.params().to_json()}}.dump() << '\n';
  }

  std::printf("%zu cards, margin %.6g, eta %.12g, strategy %s, alpha %g, seed %llu\n",
              election->size(), election->v, election->eta, params.strategy.c_str(), params.alpha,
              static_cast<unsigned long long>(params.seed));
  std::printf("enter the manual vote for each card: winner | loser | other  (or '<card_id> <vote>'; "
              "'status', 'quit')\n");
  print_next(session);

  std::string line;
  while (session.status() == SessionStatus::awaiting_mvr && std::getline(std::cin, line)) {
    std::istringstream words(line);
    std::vector<std::string> parts;
    for (std::string w; words >> w;) parts.push_back(w);
    if (parts.empty()) continue;
    if (parts[0] == "quit" || parts[0] == "q") break;
    if (parts[0] == "status") {
      print_status(session);
      print_next(session);
      continue;
    }
    const auto& expected = session.election().cards[*session.next_index()].card_id;
    const std::string card_id = parts.size() >= 2 ? parts[0] : expected;
    const std::string vote = parts.size() >= 2 ? parts[1] : parts[0];
    try {
      const Vote parsed = parse_vote(vote);
      session.enter_mvr(card_id, parsed);
      if (log.is_open()) {
        log << nlohmann::json{{"type", "mvr"}, {"card_id", card_id}, {"vote", std::string(to_string(parsed))}}.dump()
            << '\n';
        log.flush();
      }
    } catch (const Error& e) {
      std::printf("rejected: %s\n", e.what());
      continue;
    }
    print_status(session);
    print_next(session);
  }
  switch (session.status()) {
    case SessionStatus::stopped_confirmed:
      std::printf("risk limit met: the reported outcome is confirmed\n");
      break;
    case SessionStatus::escalate_full_count:
      std::printf("escalate: proceed to a full hand count\n");
      break;
    case SessionStatus::awaiting_mvr: break;
  }
  return 0;
}

// ---------------------------------------------------------------------------

SessionService* g_service = nullptr;

int cmd_serve(const std::string& election_path, const std::string& host, int port,
              const std::string& log_dir) {
  auto cache = std::make_shared<ElectionCache>(election_path);
  SessionManager sessions([cache](const std::string& path) { return (*cache)(path); }, log_dir);
  const std::size_t restored = sessions.restore();
  SessionService service(sessions);
  const int bound = service.bind(host, port);
  std::printf("listening on http://%s:%d (%zu sessions restored)\n", host.c_str(), bound, restored);
  std::fflush(stdout);
  g_service = &service;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_service) g_service->stop();
  });
  service.run();
  g_service = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ONEAudit risk-limiting audit engine"};
  app.require_subcommand(1);
  Common opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", opt.seed, "Seed (population seed, master seed or sample seed)");
    sub->add_option("--alpha", opt.alpha, "Risk limit");
    sub->add_option("--cap", opt.cap, "Maximum number of draws");
    sub->add_option("--strategy", opt.strategies,
                    "Betting strategy: fixed, apriori_kelly, oracle_kelly, agrapa, "
                    "universal_portfolio, shrink_trunc, cobra");
    sub->add_option("--grid-size", opt.grid_size, "Universal-portfolio grid size D");
    sub->add_option("--bands", opt.bands, "UI-TS band count G");
    sub->add_option("--reps", opt.reps, "Monte Carlo replications");
    sub->add_option("--out", opt.out, "Output path");
  };

  std::string spec_path;
  auto* generate = app.add_subcommand("generate", "Generate a synthetic election from a JSON spec");
  generate->add_option("spec", spec_path, "Population spec (JSON)")->required();
  add_common(generate);

  std::string config_path;
  std::string preset_name;
  std::optional<std::size_t> threads;
  bool quiet = false;
  auto* simulate = app.add_subcommand("simulate", "Estimate stopping times; writes a CSV report");
  simulate->add_option("config", config_path, "Simulation config (JSON)");
  simulate->add_option("--preset", preset_name, "Built-in configuration")
      ->check(CLI::IsMember(preset_names()));
  simulate->add_option("--threads", threads, "Worker threads (0 = all cores)");
  simulate->add_flag("--quiet", quiet, "No per-row progress on stderr");
  add_common(simulate);

  std::string population_path;
  std::optional<double> eta;
  std::optional<double> max_bet;
  auto* kelly = app.add_subcommand("kelly", "Kelly-optimal bet for a population CSV");
  kelly->add_option("population", population_path, "CSV with a 'value' column")->required();
  kelly->add_option("--eta", eta, "Null mean (defaults to manifest.json next to the file)");
  kelly->add_option("--max-bet", max_bet, "Upper end of the search interval (default 1/eta)");

  std::string election_path;
  std::string log_path;
  auto* audit = app.add_subcommand("audit", "Run a live audit in the terminal");
  audit->add_option("election", election_path, "Directory with cards.csv, or the CSV itself")->required();
  audit->add_option("--log", log_path, "Append entries to this JSONL log");
  add_common(audit);

  std::string serve_election;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string log_dir;
  auto* serve = app.add_subcommand("serve", "HTTP session service for the browser companion");
  serve->add_option("--election", serve_election, "Default election for new sessions");
  serve->add_option("--host", host, "Loopback address to bind");
  serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->add_option("--log-dir", log_dir, "Directory for per-session entry logs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) return cmd_generate(spec_path, opt);
    if (*simulate) return cmd_simulate(config_path, preset_name, threads, quiet, opt);
    if (*kelly) return cmd_kelly(population_path, eta, max_bet);
    if (*audit) return cmd_audit(election_path, log_path, opt);
    if (*serve) return cmd_serve(serve_election, host, port, log_dir);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
