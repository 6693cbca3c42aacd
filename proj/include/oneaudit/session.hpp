#pragma once

// Live audit sessions: the sample is drawn up front from a recorded seed, the
// auditor enters one manual vote per drawn card, and every entry is appended
// to a per-session log so a restarted service can replay it.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "oneaudit/assorter.hpp"
#include "oneaudit/audit.hpp"
#include "oneaudit/error.hpp"
#include "oneaudit/io.hpp"
#include "oneaudit/sampling.hpp"
#include "oneaudit/strategies.hpp"

namespace oneaudit {

enum class SessionStatus { awaiting_mvr, stopped_confirmed, escalate_full_count };

constexpr std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::awaiting_mvr: return "awaiting_mvr";
    case SessionStatus::stopped_confirmed: return "stopped_confirmed";
    case SessionStatus::escalate_full_count: return "escalate_full_count";
  }
  return "awaiting_mvr";
}

/// 12 significant digits, the precision promised to clients.
inline std::string decimal12(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

struct SessionParams {
  std::string strategy = "apriori_kelly";
  double alpha = 0.05;
  std::uint64_t seed = 0;
  /// 0 means the whole population.
  std::size_t cap = 0;
  int grid_size = 100;
  std::optional<double> fixed_bet;
  /// Where the election was loaded from; informational.
  std::string election;

  nlohmann::json to_json() const {
    nlohmann::json j{{"strategy", strategy}, {"alpha", alpha},         {"seed", seed},
                     {"cap", cap},           {"grid_size", grid_size}, {"election", election}};
    if (fixed_bet) j["fixed_bet"] = *fixed_bet;
    return j;
  }

  static SessionParams from_json(const nlohmann::json& j) {
    SessionParams p;
    try {
      p.strategy = j.value("strategy", p.strategy);
      p.alpha = j.value("alpha", p.alpha);
      p.seed = j.value("seed", p.seed);
      p.cap = j.value("cap", p.cap);
      p.grid_size = j.value("grid_size", p.grid_size);
      p.election = j.value("election", p.election);
      if (j.contains("fixed_bet")) p.fixed_bet = j.at("fixed_bet").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, std::string("session parameters: ") + e.what());
    }
    return p;
  }
};

/// Strategy usable in a live audit; the oracle needs the true votes and is refused.
inline BetStrategy session_strategy(const SessionParams& params, const ElectionData& election) {
  switch (parse_strategy_kind(params.strategy)) {
    case StrategyKind::fixed:
      if (!params.fixed_bet) throw Error(ErrorCode::InvalidConfig, "fixed strategy needs fixed_bet");
      return BetStrategy::fixed(*params.fixed_bet);
    case StrategyKind::apriori_kelly: return BetStrategy::apriori_kelly(election.postulated().values);
    case StrategyKind::oracle_kelly:
      throw Error(ErrorCode::InvalidConfig, "oracle_kelly needs the true votes; not available in a live audit");
    case StrategyKind::agrapa: return BetStrategy::agrapa();
    case StrategyKind::universal_portfolio: return BetStrategy::universal_portfolio(params.grid_size);
    case StrategyKind::shrink_trunc: return BetStrategy::shrink_trunc();
    case StrategyKind::cobra: return BetStrategy::cobra();
  }
  throw Error(ErrorCode::InvalidConfig, "unknown strategy");
}

struct SessionEntry {
  std::string card_id;
  Vote vote = Vote::other;
  double x = 0.0;
  double bet = 0.0;
  double wealth = 1.0;
  double p_value = 1.0;
};

class AuditSession {
 public:
  AuditSession(std::string id, std::shared_ptr<const ElectionData> election, SessionParams params)
      : id_(std::move(id)), election_(std::move(election)), params_(std::move(params)) {
    if (!election_ || election_->size() == 0) throw Error(ErrorCode::InvalidConfig, "empty election");
    const std::size_t n = election_->size();
    const std::size_t cap = params_.cap == 0 ? n : params_.cap;
    if (cap > n) throw Error(ErrorCode::InvalidConfig, "cap exceeds the number of cards");
    params_.cap = cap;
    auto prepared = std::make_shared<const PreparedStrategy>(
        prepare(session_strategy(params_, *election_), election_->eta));
    audit_.emplace(std::move(prepared), n, SamplingMode::without_replacement, params_.alpha, cap);
    stream_ = collect(PermutationSource(n, cap, params_.seed));
  }

  const std::string& id() const { return id_; }
  const SessionParams& params() const { return params_; }
  const std::vector<std::size_t>& stream() const { return stream_; }
  const std::vector<SessionEntry>& entries() const { return entries_; }
  const ElectionData& election() const { return *election_; }

  SessionStatus status() const {
    switch (audit_->status()) {
      case AuditStatus::confirmed: return SessionStatus::stopped_confirmed;
      case AuditStatus::escalate: return SessionStatus::escalate_full_count;
      case AuditStatus::running: break;
    }
    return entries_.size() >= stream_.size() ? SessionStatus::escalate_full_count
                                             : SessionStatus::awaiting_mvr;
  }

  double p_value() const { return audit_->p(); }
  double wealth() const { return audit_->state().wealth; }

  /// Index of the card the auditor must retrieve next.
  std::optional<std::size_t> next_index() const {
    if (status() != SessionStatus::awaiting_mvr) return std::nullopt;
    return stream_[entries_.size()];
  }

  /// Records the manual vote for the next drawn card. The state is left
  /// untouched when the entry is rejected.
  const SessionEntry& enter_mvr(const std::string& card_id, Vote vote) {
    const auto next = next_index();
    if (!next) {
      throw Error(ErrorCode::InvalidState, "session " + id_ + " is no longer awaiting MVRs");
    }
    const auto& card = election_->cards[*next];
    if (card.card_id != card_id) {
      throw Error(ErrorCode::OutOfOrderEntry,
                  "expected card " + card.card_id + ", got " + card_id);
    }
    const double x = rescaled_overstatement(election_->refs.values[*next],
                                            election_->assorter(vote),
                                            election_->assorter.upper_bound);
    const auto record = audit_->step(x, *next);
    if (audit_->status() == AuditStatus::running && entries_.size() + 1 >= stream_.size()) {
      audit_->exhaust();
    }
    entries_.push_back({card_id, vote, x, record.bet, record.wealth, record.p_value});
    return entries_.back();
  }

  const SessionEntry& enter_mvr(const std::string& card_id, const std::string& vote) {
    return enter_mvr(card_id, parse_vote(vote));
  }

  nlohmann::json view() const {
    using nlohmann::json;
    json next = nullptr;
    if (const auto index = next_index()) {
      const auto& card = election_->cards[*index];
      next = json{{"card_id", card.card_id},
                  {"batch_id", card.batch_id ? json(*card.batch_id) : json(nullptr)},
                  {"position", entries_.size() + 1}};
    }
    json entries = json::array();
    json p_values = json::array();
    json wealth_series = json::array();
    for (const auto& e : entries_) {
      entries.push_back(json{{"card_id", e.card_id},
                             {"vote", std::string(to_string(e.vote))},
                             {"p_value", decimal12(e.p_value)},
                             {"wealth", decimal12(e.wealth)}});
      p_values.push_back(decimal12(e.p_value));
      wealth_series.push_back(decimal12(e.wealth));
    }
    return json{{"session_id", id_},
                {"status", std::string(to_string(status()))},
                {"strategy", params_.strategy},
                {"alpha", decimal12(params_.alpha)},
                {"seed", params_.seed},
                {"cap", params_.cap},
                {"eta", decimal12(election_->eta)},
                {"margin", decimal12(election_->v)},
                {"draws", entries_.size()},
                {"p_value", decimal12(p_value())},
                {"wealth", decimal12(wealth())},
                {"next_card", next},
                {"entries", entries},
                {"p_values", p_values},
                {"wealth_series", wealth_series}};
  }

 private:
  std::string id_;
  std::shared_ptr<const ElectionData> election_;
  SessionParams params_;
  std::optional<SequentialAudit> audit_;
  std::vector<std::size_t> stream_;
  std::vector<SessionEntry> entries_;
};

/// Owns the sessions of one service. Entries on a session are serialized by
/// its own lock; status reads take the same lock, so a read never sees half
/// an entry.
class SessionManager {
 public:
  using ElectionLoader = std::function<std::shared_ptr<const ElectionData>(const std::string&)>;

  /// `log_dir` empty disables persistence.
  SessionManager(ElectionLoader loader, std::filesystem::path log_dir = {})
      : loader_(std::move(loader)), log_dir_(std::move(log_dir)) {
    if (!log_dir_.empty()) {
      std::error_code ec;
      std::filesystem::create_directories(log_dir_, ec);
      if (ec) throw Error(ErrorCode::IoError, "cannot create " + log_dir_.string() + ": " + ec.message());
    }
  }

  nlohmann::json create(const SessionParams& params) {
    auto election = loader_(params.election);
    std::unique_lock lock(map_mutex_);
    const std::string id = "s" + std::to_string(++counter_);
    auto slot = std::make_shared<Slot>(id, std::move(election), params);
    append_log(id, nlohmann::json{{"type", "start"}, {"params", slot->session.params().to_json()}},
               /*truncate=*/true);
    sessions_[id] = slot;
    std::lock_guard slot_lock(slot->mutex);
    return slot->session.view();
  }

  nlohmann::json enter(const std::string& id, const std::string& card_id, const std::string& vote) {
    auto slot = find(id);
    std::lock_guard lock(slot->mutex);
    const Vote parsed = parse_vote(vote);
    slot->session.enter_mvr(card_id, parsed);
    append_log(id, nlohmann::json{{"type", "mvr"}, {"card_id", card_id},
                                  {"vote", std::string(to_string(parsed))}});
    return slot->session.view();
  }

  nlohmann::json view(const std::string& id) {
    auto slot = find(id);
    std::lock_guard lock(slot->mutex);
    return slot->session.view();
  }

  std::size_t size() const {
    std::shared_lock lock(map_mutex_);
    return sessions_.size();
  }

  /// Rebuilds every session found in the log directory by replaying its entries.
  std::size_t restore() {
    if (log_dir_.empty()) return 0;
    std::vector<std::filesystem::path> logs;
    for (const auto& entry : std::filesystem::directory_iterator(log_dir_)) {
      if (entry.path().extension() == ".jsonl") logs.push_back(entry.path());
    }
    std::sort(logs.begin(), logs.end());
    std::size_t restored = 0;
    for (const auto& path : logs) {
      const std::string id = path.stem().string();
      std::ifstream in(path);
      std::string line;
      std::shared_ptr<Slot> slot;
      std::size_t line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
          throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        const auto type = j.value("type", "");
        if (type == "start") {
          const auto params = SessionParams::from_json(j.at("params"));
          slot = std::make_shared<Slot>(id, loader_(params.election), params);
        } else if (type == "mvr" && slot) {
          slot->session.enter_mvr(j.at("card_id").get<std::string>(), j.at("vote").get<std::string>());
        } else {
          throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": unexpected record");
        }
      }
      if (!slot) continue;
      std::unique_lock lock(map_mutex_);
      sessions_[id] = slot;
      if (id.size() > 1 && id[0] == 's') {
        try {
          counter_ = std::max<std::uint64_t>(counter_, std::stoull(id.substr(1)));
        } catch (const std::exception&) {
        }
      }
      ++restored;
    }
    return restored;
  }

 private:
  struct Slot {
    Slot(std::string id, std::shared_ptr<const ElectionData> election, SessionParams params)
        : session(std::move(id), std::move(election), std::move(params)) {}
    std::mutex mutex;
    AuditSession session;
  };

  std::shared_ptr<Slot> find(const std::string& id) {
    std::shared_lock lock(map_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::SessionNotFound, "no session '" + id + "'");
    return it->second;
  }

  void append_log(const std::string& id, const nlohmann::json& record, bool truncate = false) {
    if (log_dir_.empty()) return;
    const auto path = log_dir_ / (id + ".jsonl");
    std::ofstream out(path, truncate ? std::ios::trunc : std::ios::app);
    out << record.dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "cannot append to " + path.string());
  }

  ElectionLoader loader_;
  std::filesystem::path log_dir_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  std::uint64_t counter_ = 0;
};

/// Loads `cards.csv` from an election directory (or a cards file directly),
/// caching by path.
class ElectionCache {
 public:
  explicit ElectionCache(std::string default_path = {}) : default_(std::move(default_path)) {}

  std::shared_ptr<const ElectionData> operator()(const std::string& requested) {
    const std::string key = requested.empty() ? default_ : requested;
    if (key.empty()) throw Error(ErrorCode::InvalidConfig, "no election given");
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    std::filesystem::path path(key);
    if (std::filesystem::is_directory(path)) path /= "cards.csv";
    auto data = std::make_shared<const ElectionData>(read_cards_csv(path));
    cache_[key] = data;
    return data;
  }

  void insert(const std::string& key, std::shared_ptr<const ElectionData> data) {
    std::lock_guard lock(mutex_);
    cache_[key] = std::move(data);
  }

 private:
  std::string default_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const ElectionData>> cache_;
};

}  // namespace oneaudit
