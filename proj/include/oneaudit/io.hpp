#pragma once

// CSV files for cards and populations, plus the JSON manifest written next to them.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "oneaudit/assorter.hpp"
#include "oneaudit/error.hpp"
#include "oneaudit/popgen.hpp"

namespace oneaudit {

namespace csv {

inline std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_double(const std::string& text, const std::string& where) {
  try {
    std::size_t used = 0;
    const double x = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return x;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, where + ": '" + text + "' is not a number");
  }
}

/// Header-indexed reader; columns are looked up by name.
class Table {
 public:
  static Table read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    Table table;
    table.path_ = path.string();
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, path.string() + ": empty file");
    table.header_ = split(line);
    while (std::getline(in, line)) {
      if (line.empty() || line == "\r") continue;
      table.rows_.push_back(split(line));
    }
    return table;
  }

  std::size_t rows() const { return rows_.size(); }

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header_.size(); ++i) {
      if (header_[i] == name) return i;
    }
    return std::nullopt;
  }

  std::size_t require(std::string_view name) const {
    if (auto c = column(name)) return *c;
    throw Error(ErrorCode::ParseError, path_ + ": missing column '" + std::string(name) + "'");
  }

  const std::string& at(std::size_t row, std::size_t col) const {
    if (col >= rows_[row].size()) {
      throw Error(ErrorCode::ParseError, where(row) + ": too few fields");
    }
    return rows_[row][col];
  }

  std::string where(std::size_t row) const {
    return path_ + ":" + std::to_string(row + 2);
  }

 private:
  std::string path_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace csv

// ---------------------------------------------------------------------------
// Populations

inline void write_population_csv(const AssorterPopulation& pop, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << "value,label\n";
  for (std::size_t i = 0; i < pop.size(); ++i) {
    out << csv::format_double(pop.values[i]) << ',' << (pop.labels.empty() ? 0 : pop.labels[i])
        << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

/// Reads a `value[,label]` CSV; the null mean and bound come from the caller.
inline AssorterPopulation read_population_csv(const std::filesystem::path& path, double null_mean,
                                              double upper_bound = 1.0) {
  const auto table = csv::Table::read(path);
  const std::size_t value_col = table.require("value");
  const auto label_col = table.column("label");
  AssorterPopulation pop;
  pop.null_mean = null_mean;
  pop.upper_bound = upper_bound;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    pop.values.push_back(csv::parse_double(table.at(r, value_col), table.where(r)));
    if (label_col) {
      pop.labels.push_back(static_cast<int>(csv::parse_double(table.at(r, *label_col), table.where(r))));
    }
  }
  return pop;
}

// ---------------------------------------------------------------------------
// Cards and elections

/// What an auditor holds before the audit: cards, CVR information and reference values.
struct ElectionData {
  std::vector<CardRecord> cards;
  BatchCvrs batch_cvrs;
  ReferenceValueSet refs;
  Assorter assorter = plurality_assorter();
  double v = 0.0;
  double eta = 0.0;

  std::size_t size() const { return cards.size(); }

  AssorterPopulation postulated() const {
    return postulated_population(cards, batch_cvrs, assorter, v);
  }

  static ElectionData from(const Election& election) {
    ElectionData data;
    data.cards = election.cards;
    data.batch_cvrs = election.batch_cvrs;
    data.refs = election.refs;
    data.assorter = election.assorter;
    data.v = election.v;
    data.eta = election.eta;
    return data;
  }
};

/// One row per card: identity, CVR vote (for batch cards, one CVR of the
/// batch), manual vote when known, and the reference value.
inline void write_cards_csv(const Election& election, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << "card_id,batch_id,has_linked_cvr,cvr_vote,mvr_vote,reference_value\n";
  for (std::size_t i = 0; i < election.size(); ++i) {
    const auto& card = election.cards[i];
    out << card.card_id << ',' << card.batch_id.value_or("") << ','
        << (card.has_linked_cvr ? 1 : 0) << ',' << to_string(card.vote) << ','
        << to_string(election.mvrs[i]) << ',' << csv::format_double(election.refs.values[i]) << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

/// Reads a cards CSV back. Reference values are recomputed from the CVR votes
/// and checked against the stored column when present.
inline ElectionData read_cards_csv(const std::filesystem::path& path) {
  const auto table = csv::Table::read(path);
  const auto id_col = table.require("card_id");
  const auto batch_col = table.require("batch_id");
  const auto linked_col = table.require("has_linked_cvr");
  const auto cvr_col = table.require("cvr_vote");
  const auto ref_col = table.column("reference_value");

  ElectionData data;
  std::vector<double> stored;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    const bool linked = table.at(r, linked_col) == "1" || table.at(r, linked_col) == "true";
    Vote vote;
    try {
      vote = parse_vote(table.at(r, cvr_col));
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError, table.where(r) + ": " + e.message());
    }
    if (linked) {
      data.cards.push_back(CardRecord::linked(table.at(r, id_col), vote));
    } else {
      const auto& batch = table.at(r, batch_col);
      if (batch.empty()) throw Error(ErrorCode::ParseError, table.where(r) + ": unlinked card without batch_id");
      data.cards.push_back(CardRecord::in_batch(table.at(r, id_col), batch, vote));
      data.batch_cvrs[batch].push_back(vote);
    }
    if (ref_col) stored.push_back(csv::parse_double(table.at(r, *ref_col), table.where(r)));
  }
  data.refs = oneaudit_references(data.cards, data.batch_cvrs, data.assorter);
  for (std::size_t i = 0; i < stored.size(); ++i) {
    if (std::abs(stored[i] - data.refs.values[i]) > 1e-9) {
      throw Error(ErrorCode::ParseError, table.where(i) + ": reference value disagrees with CVRs");
    }
  }
  data.v = reported_margin(data.refs);
  data.eta = rescaled_null_mean(data.assorter.upper_bound, data.v);
  return data;
}

inline nlohmann::json manifest_json(const Election& election) {
  const auto& spec = election.spec;
  return nlohmann::json{
      {"eta", election.eta},
      {"v", election.v},
      {"u", election.assorter.upper_bound},
      {"N", election.size()},
      {"seed", spec.seed},
      {"reported_mean", election.refs.reported_mean},
      {"true_mean", election.true_mean()},
      {"population_mean", election.population.mean()},
      {"spec",
       {{"reported_mean", spec.reported_mean},
        {"across_gap", spec.across_gap},
        {"within_gap", spec.within_gap},
        {"n_cvr", spec.n_cvr},
        {"n_batch_cards", spec.n_batch_cards},
        {"batch_size", spec.batch_size},
        {"error_model", std::string(to_string(spec.error_model))},
        {"seed", spec.seed}}},
  };
}

struct Manifest {
  double eta = 0.0;
  double v = 0.0;
  double u = 1.0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
};

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    return Manifest{j.at("eta").get<double>(), j.at("v").get<double>(), j.at("u").get<double>(),
                    j.at("N").get<std::size_t>(), j.at("seed").get<std::uint64_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

/// Writes cards.csv, population.csv and manifest.json into `dir`.
inline void write_election(const Election& election, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  write_cards_csv(election, dir / "cards.csv");
  write_population_csv(election.population, dir / "population.csv");
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir / "manifest.json").string());
  out << manifest_json(election).dump(2) << '\n';
}

}  // namespace oneaudit
