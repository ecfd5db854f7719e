#pragma once

// JSON and CSV forms of the public record types.

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sqlrl/error.hpp"
#include "sqlrl/grpo.hpp"
#include "sqlrl/metrics.hpp"
#include "sqlrl/reward_engine.hpp"

namespace sqlrl {

using nlohmann::json;

/// Wire form of a reward breakdown. The six core fields are always present;
/// verbose adds similarity, format violations and execution summaries.
inline json to_json(const RewardBreakdown& b, bool verbose = false) {
  json j = {{"sigma_f", b.sigma_f}, {"sigma_e", b.sigma_e},         {"sigma_s", b.sigma_s},
            {"sigma_t", b.sigma_t}, {"total", b.total}, {"stage", std::string(to_string(b.stage))}};
  if (verbose) {
    j["similarity"] = {{"match_ratio", b.skeleton.match_ratio},
                       {"jaccard", b.skeleton.jaccard},
                       {"combined", b.skeleton.combined},
                       {"passed", b.skeleton.passed}};
    json v = json::array();
    for (auto x : b.format.violations) v.push_back(std::string(to_string(x)));
    j["violations"] = v;
    if (b.outcomes) {
      auto summary = [](const ExecutionOutcome& o) {
        return json{{"status", std::string(to_string(o.status))},
                    {"rows", o.rows.size()},
                    {"mean_time_s", o.mean_time_s},
                    {"error", o.error}};
      };
      j["pred"] = summary(b.outcomes->first);
      j["gold"] = summary(b.outcomes->second);
    }
  }
  return j;
}

inline json error_json(ErrorKind kind, const std::string& message) {
  return json{{"error", std::string(to_string(kind))}, {"message", message}};
}

namespace detail {

inline std::string require_string(const json& j, const char* key, const char* what) {
  if (!j.contains(key) || !j[key].is_string())
    throw Error(ErrorKind::MalformedInput, std::string(what) + " needs string field \"" + key + "\"");
  return j[key].get<std::string>();
}

inline std::string opt_string(const json& j, const char* key) {
  return j.contains(key) && j[key].is_string() ? j[key].get<std::string>() : std::string{};
}

}  // namespace detail

/// {response, db_id, source, mode, gold_sql}
struct RewardRequest {
  std::string response;
  GoldRecord gold;
};

inline RewardRequest reward_request_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::MalformedInput, "reward request must be a JSON object");
  RewardRequest r;
  r.response = detail::require_string(j, "response", "reward request");
  r.gold.db_id = detail::require_string(j, "db_id", "reward request");
  r.gold.source = detail::opt_string(j, "source");
  r.gold.mode = parse_thinking_mode(detail::opt_string(j, "mode"));
  r.gold.gold_sql = detail::require_string(j, "gold_sql", "reward request");
  return r;
}

inline EvalRecord eval_record_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::MalformedInput, "eval record must be a JSON object");
  EvalRecord r;
  r.id = j.contains("id") ? (j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump()) : std::string{};
  r.db_id = detail::require_string(j, "db_id", "eval record");
  r.source = detail::opt_string(j, "source");
  r.question = detail::opt_string(j, "question");
  r.gold_sql = detail::require_string(j, "gold_sql", "eval record");
  if (r.gold_sql.empty()) throw Error(ErrorKind::MalformedInput, "eval record " + r.id + " has empty gold_sql");
  r.pred_sql = detail::opt_string(j, "pred_sql");
  if (j.contains("difficulty") && j["difficulty"].is_string()) r.difficulty = j["difficulty"].get<std::string>();
  if (j.contains("tokens") && j["tokens"].is_object()) {
    const auto& t = j["tokens"];
    TokenUsage u;
    u.input_tokens = t.value("input_tokens", std::int64_t{0});
    u.output_tokens = t.value("output_tokens", std::int64_t{0});
    u.multiplier = t.value("multiplier", 1.0);
    r.tokens = u;
  }
  return r;
}

inline SftCandidate sft_candidate_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::MalformedInput, "sft candidate must be a JSON object");
  SftCandidate c;
  c.question = detail::require_string(j, "question", "sft candidate");
  c.reasoning = detail::opt_string(j, "reasoning");
  c.candidate_sql = detail::require_string(j, "candidate_sql", "sft candidate");
  c.gold_sql = detail::require_string(j, "gold_sql", "sft candidate");
  if (!j.contains("attempt_index") || !j["attempt_index"].is_number_integer())
    throw Error(ErrorKind::MalformedInput, "sft candidate needs integer field \"attempt_index\"");
  c.attempt_index = j["attempt_index"].get<int>();
  return c;
}

inline json to_json(const MetricBlock& b) { return json{{"n", b.n}, {"em", b.em}, {"ex", b.ex}, {"ves", b.ves}}; }

inline json to_json(const MetricsReport& r) {
  json j;
  j["engine"] = r.engine;
  j["n"] = r.n;
  j["em"] = r.em;
  j["ex"] = r.ex;
  j["ves"] = r.ves;
  json diff = json::object();
  for (const auto& [k, b] : r.by_difficulty) diff[k] = to_json(b);
  j["by_difficulty"] = diff;
  json hist = json::object();
  for (const auto& [c, n] : r.error_histogram) hist[std::string(to_string(c))] = n;
  j["error_histogram"] = hist;
  j["bad_gold_ids"] = r.bad_gold_ids;
  if (r.mean_token_cost) j["mean_token_cost"] = *r.mean_token_cost;
  return j;
}

inline json to_json(const grpo::TrajectoryPoint& p) {
  return json{{"step", p.step}, {"mean_reward", p.mean_reward}, {"std_reward", p.std_reward}, {"probs", p.probs}};
}

inline std::string csv_header() { return "id,em,ex_match,time_ratio,error_classes"; }

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

inline std::string to_csv_row(const RecordResult& r) {
  std::ostringstream os;
  os << csv_escape(r.id) << ',' << (r.em ? 1 : 0) << ',' << (r.ex_match ? 1 : 0) << ',';
  if (r.time_ratio) os << std::setprecision(9) << *r.time_ratio;
  os << ',';
  std::string classes;
  for (auto c : r.error_classes) {
    if (!classes.empty()) classes += ';';
    classes += to_string(c);
  }
  os << csv_escape(classes);
  return os.str();
}

/// Reads line-delimited JSON. Blank lines are ignored. With lenient set,
/// lines that fail to parse or convert are counted and skipped; otherwise the
/// first bad line throws MalformedInput naming its line number.
template <typename T, typename Convert>
std::vector<T> read_jsonl(std::istream& in, Convert convert, bool lenient = false, std::size_t* skipped = nullptr,
                          std::vector<json>* raw = nullptr) {
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0, bad = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = json::parse(line);
      out.push_back(convert(j));
      if (raw) raw->push_back(std::move(j));
    } catch (const std::exception& e) {
      if (!lenient) throw Error(ErrorKind::MalformedInput, "line " + std::to_string(lineno) + ": " + e.what());
      ++bad;
    }
  }
  if (skipped) *skipped = bad;
  return out;
}

}  // namespace sqlrl
