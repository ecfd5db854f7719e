#pragma once

// Benchmark metrics over evaluation records:
//   EM   clause-level set match
//   EX   result-set equality
//   VES  EX weighted by sqrt(T_gold / T_pred), unclamped
//   PGR  (EX_router - EX_weak) / (EX_strong - EX_weak)
//   TEP  (dEX / EX_base) / (dL / L_base), L = L_in + mu * L_out per record
// plus the eight-way error classifier and the self-distillation filter.

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "sqlrl/error.hpp"
#include "sqlrl/exec_harness.hpp"
#include "sqlrl/sql_analyzer.hpp"

namespace sqlrl {

struct TokenUsage {
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  double multiplier = 1.0;

  double cost() const { return static_cast<double>(input_tokens) + multiplier * static_cast<double>(output_tokens); }
};

struct EvalRecord {
  std::string id;
  std::string db_id;
  std::string source;
  std::string question;
  std::string gold_sql;
  std::string pred_sql;
  std::optional<std::string> difficulty;
  std::optional<TokenUsage> tokens;
};

enum class ErrorClass { Subquery, Clause, Operator, Function, Condition, Value, Table, Attribute };

inline constexpr ErrorClass kAllErrorClasses[] = {ErrorClass::Subquery,  ErrorClass::Clause, ErrorClass::Operator,
                                                  ErrorClass::Function,  ErrorClass::Condition, ErrorClass::Value,
                                                  ErrorClass::Table,     ErrorClass::Attribute};

inline std::string_view to_string(ErrorClass c) {
  switch (c) {
    case ErrorClass::Subquery: return "Subquery";
    case ErrorClass::Clause: return "Clause";
    case ErrorClass::Operator: return "Operator";
    case ErrorClass::Function: return "Function";
    case ErrorClass::Condition: return "Condition";
    case ErrorClass::Value: return "Value";
    case ErrorClass::Table: return "Table";
    case ErrorClass::Attribute: return "Attribute";
  }
  return "";
}

/// Set equality of every clause bucket, the logical/comparison operator
/// multiset and the subquery count. A simplified stand-in for the official
/// Spider checker.
inline bool exact_set_match(std::string_view gold, std::string_view pred) {
  auto g = decompose_clauses(gold);
  auto p = decompose_clauses(pred);
  return g.select_items == p.select_items && g.distinct == p.distinct && g.from_tables == p.from_tables &&
         g.join_conditions == p.join_conditions && g.where_predicates == p.where_predicates &&
         g.group_by_items == p.group_by_items && g.having_predicates == p.having_predicates &&
         g.order_by_items == p.order_by_items && g.limit_value == p.limit_value &&
         g.subquery_count == p.subquery_count && g.operators == p.operators;
}

/// Every error class that applies to a (gold, wrong prediction) pair.
inline std::set<ErrorClass> classify_error(std::string_view gold, std::string_view pred) {
  auto g = decompose_clauses(gold);
  auto p = decompose_clauses(pred);
  std::set<ErrorClass> out;
  if (g.subquery_count != p.subquery_count) out.insert(ErrorClass::Subquery);
  auto presence = [](const ClauseDecomposition& d) {
    return std::array<bool, 5>{!d.where_predicates.empty(), !d.group_by_items.empty(), !d.having_predicates.empty(),
                               !d.order_by_items.empty(), d.limit_value.has_value()};
  };
  if (presence(g) != presence(p)) out.insert(ErrorClass::Clause);
  if (g.operators != p.operators) out.insert(ErrorClass::Operator);
  if (g.functions != p.functions) out.insert(ErrorClass::Function);
  if (g.predicate_shapes != p.predicate_shapes) out.insert(ErrorClass::Condition);
  if (g.literals != p.literals) out.insert(ErrorClass::Value);
  if (g.from_tables != p.from_tables) out.insert(ErrorClass::Table);
  if (extract_schema_elements(gold).columns != extract_schema_elements(pred).columns)
    out.insert(ErrorClass::Attribute);
  return out;
}

/// Per-record VES term: 1[match] * sqrt(T_gold / T_pred), timings floored.
inline double ves_factor(bool match, double t_gold_s, double t_pred_s) {
  if (!match) return 0.0;
  return std::sqrt(floor_timing(t_gold_s) / floor_timing(t_pred_s));
}

inline double performance_gap_recovered(double ex_router, double ex_weak, double ex_strong) {
  if (ex_strong == ex_weak) throw Error(ErrorKind::DegenerateGap, "strong and weak accuracies are equal");
  return (ex_router - ex_weak) / (ex_strong - ex_weak);
}

/// Mean per-record token cost L_in + mu * L_out.
inline double mean_token_cost(std::span<const TokenUsage> usage) {
  if (usage.empty()) throw Error(ErrorKind::DegenerateTokens, "no token usage records");
  double total = 0.0;
  for (const auto& u : usage) {
    if (u.input_tokens < 0 || u.output_tokens < 0) throw Error(ErrorKind::InvalidArgument, "negative token count");
    total += u.cost();
  }
  return total / static_cast<double>(usage.size());
}

inline double token_elasticity(double ex_method, double ex_base, double mean_cost_method, double mean_cost_base) {
  if (!(mean_cost_base > 0.0)) throw Error(ErrorKind::DegenerateTokens, "baseline token cost must be > 0");
  if (ex_base == 0.0) throw Error(ErrorKind::DegenerateGap, "baseline accuracy is 0");
  const double dl = mean_cost_method - mean_cost_base;
  if (dl == 0.0) throw Error(ErrorKind::DegenerateTokens, "token cost unchanged");
  return ((ex_method - ex_base) / ex_base) / (dl / mean_cost_base);
}

/// Aggregate form: total costs over n samples each.
inline double token_elasticity(double ex_method, double ex_base, const TokenUsage& total_method,
                               const TokenUsage& total_base, std::int64_t n) {
  if (n <= 0) throw Error(ErrorKind::DegenerateTokens, "sample size must be > 0");
  return token_elasticity(ex_method, ex_base, total_method.cost() / static_cast<double>(n),
                          total_base.cost() / static_cast<double>(n));
}

struct RecordResult {
  std::string id;
  std::optional<std::string> difficulty;
  bool em = false;
  bool ex_match = false;
  ExecStatus pred_status = ExecStatus::Ok;
  std::optional<double> time_ratio;  // T_gold / T_pred, unclamped; only when pred ran
  double ves = 0.0;
  std::set<ErrorClass> error_classes;
  bool bad_gold = false;
  std::string gold_error;
};

struct MetricBlock {
  std::size_t n = 0;
  double em = 0.0;
  double ex = 0.0;
  double ves = 0.0;
};

struct MetricsReport {
  std::string engine;
  std::size_t n = 0;
  double em = 0.0;
  double ex = 0.0;
  double ves = 0.0;
  std::map<std::string, MetricBlock> by_difficulty;
  std::map<ErrorClass, std::size_t> error_histogram;
  std::vector<std::string> bad_gold_ids;
  std::optional<double> mean_token_cost;
};

/// Folds per-record results into a report. Records with a defective gold
/// query are listed but not scored.
inline MetricsReport aggregate(std::span<const RecordResult> results) {
  MetricsReport r;
  for (auto c : kAllErrorClasses) r.error_histogram[c] = 0;
  std::map<std::string, MetricBlock> sums;
  for (const auto& x : results) {
    if (x.bad_gold) {
      r.bad_gold_ids.push_back(x.id);
      continue;
    }
    ++r.n;
    r.em += x.em ? 1.0 : 0.0;
    r.ex += x.ex_match ? 1.0 : 0.0;
    r.ves += x.ves;
    if (x.difficulty) {
      auto& b = sums[*x.difficulty];
      ++b.n;
      b.em += x.em ? 1.0 : 0.0;
      b.ex += x.ex_match ? 1.0 : 0.0;
      b.ves += x.ves;
    }
    for (auto c : x.error_classes) ++r.error_histogram[c];
  }
  if (r.n > 0) {
    const double n = static_cast<double>(r.n);
    r.em /= n;
    r.ex /= n;
    r.ves /= n;
  }
  for (auto& [k, b] : sums) {
    const double n = static_cast<double>(b.n);
    r.by_difficulty[k] = {b.n, b.em / n, b.ex / n, b.ves / n};
  }
  return r;
}

struct EvalConfig {
  TimingConfig timing;
  CompareMode compare = CompareMode::Multiset;
  std::optional<Engine> engine;
  unsigned jobs = 1;
};

/// Scores one record: EM from the SQL text, EX and VES from execution.
inline RecordResult evaluate_record(const EvalRecord& rec, const DbRegistry& registry, Executor& executor,
                                    const EvalConfig& cfg) {
  if (rec.gold_sql.empty()) throw Error(ErrorKind::MalformedInput, "record " + rec.id + " has empty gold_sql");
  RecordResult r;
  r.id = rec.id;
  r.difficulty = rec.difficulty;
  const DbHandle& db = registry.resolve(rec.db_id, rec.source, cfg.engine);

  auto gold = executor.execute(db, rec.gold_sql, cfg.timing);
  if (gold.status != ExecStatus::Ok) {
    r.bad_gold = true;
    r.gold_error = std::string(to_string(gold.status)) + ": " + gold.error;
    return r;
  }
  try {
    r.em = !rec.pred_sql.empty() && exact_set_match(rec.gold_sql, rec.pred_sql);
  } catch (const Error&) {
    r.em = false;
  }
  if (rec.pred_sql.find_first_not_of(" \t\r\n") == std::string::npos) {
    r.pred_status = ExecStatus::SqlError;
  } else {
    auto pred = executor.execute(db, rec.pred_sql, cfg.timing);
    r.pred_status = pred.status;
    if (pred.status == ExecStatus::Ok) {
      r.ex_match = results_equal(pred, gold, cfg.compare);
      r.time_ratio = floor_timing(gold.mean_time_s) / floor_timing(pred.mean_time_s);
      r.ves = ves_factor(r.ex_match, gold.mean_time_s, pred.mean_time_s);
    }
  }
  if (!r.ex_match) {
    try {
      r.error_classes = classify_error(rec.gold_sql, rec.pred_sql);
    } catch (const Error&) {
    }
  }
  return r;
}

/// Evaluates every record, in parallel when cfg.jobs > 1. Output order
/// follows input order.
inline std::vector<RecordResult> evaluate_records(std::span<const EvalRecord> records, const DbRegistry& registry,
                                                  Executor& executor, const EvalConfig& cfg) {
  std::vector<RecordResult> out(records.size());
  std::vector<std::exception_ptr> errors(records.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      try {
        out[i] = evaluate_record(records[i], registry, executor, cfg);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  unsigned jobs = std::max(1u, cfg.jobs);
  if (jobs == 1 || records.size() < 2) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < std::min<std::size_t>(jobs, records.size()); ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

inline MetricsReport evaluate(std::span<const EvalRecord> records, const DbRegistry& registry, Executor& executor,
                              const EvalConfig& cfg) {
  auto results = evaluate_records(records, registry, executor, cfg);
  auto report = aggregate(results);
  if (cfg.engine) report.engine = std::string(to_string(*cfg.engine));
  std::vector<TokenUsage> usage;
  for (const auto& r : records)
    if (r.tokens) usage.push_back(*r.tokens);
  if (!usage.empty() && usage.size() == records.size()) report.mean_token_cost = mean_token_cost(usage);
  return report;
}

inline double execution_accuracy(std::span<const EvalRecord> records, const DbRegistry& registry, Executor& executor,
                                 const EvalConfig& cfg) {
  return evaluate(records, registry, executor, cfg).ex;
}

inline double valid_efficiency_score(std::span<const EvalRecord> records, const DbRegistry& registry,
                                     Executor& executor, const EvalConfig& cfg) {
  return evaluate(records, registry, executor, cfg).ves;
}

/// Mean of per-engine reports, used only when more than one engine ran.
inline MetricsReport average_reports(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw Error(ErrorKind::InvalidArgument, "no reports to average");
  MetricsReport avg;
  avg.engine = "average";
  const double k = static_cast<double>(reports.size());
  for (auto c : kAllErrorClasses) avg.error_histogram[c] = 0;
  for (const auto& r : reports) {
    avg.n += r.n;
    avg.em += r.em / k;
    avg.ex += r.ex / k;
    avg.ves += r.ves / k;
    for (const auto& [c, cnt] : r.error_histogram) avg.error_histogram[c] += cnt;
  }
  avg.n = static_cast<std::size_t>(std::llround(static_cast<double>(avg.n) / k));
  return avg;
}

// --- self-distillation filter -------------------------------------------

struct SftCandidate {
  std::string question;
  std::string reasoning;
  std::string candidate_sql;
  std::string gold_sql;
  int attempt_index = 0;
};

/// Collapses whitespace and lower-cases keywords and function names; literal
/// and identifier spelling is kept. Text that does not tokenize is only
/// whitespace-collapsed.
inline std::string normalize_for_exact_match(std::string_view sql) {
  try {
    auto toks = tokenize(sql);
    std::vector<std::string> lex;
    std::vector<bool> fn;
    for (const auto& t : toks) {
      bool lower_it = t.kind == TokenKind::Keyword || t.kind == TokenKind::FunctionName;
      lex.push_back(lower_it ? t.text : t.raw);
      fn.push_back(t.kind == TokenKind::FunctionName);
    }
    while (!lex.empty() && lex.back() == ";") {
      lex.pop_back();
      fn.pop_back();
    }
    return render_lexemes(lex, fn);
  } catch (const Error&) {
    std::string out;
    bool space = false;
    for (char c : sql) {
      if (std::isspace(static_cast<unsigned char>(c))) {
        space = !out.empty();
      } else {
        if (space) out.push_back(' ');
        out.push_back(c);
        space = false;
      }
    }
    return out;
  }
}

struct SftStats {
  std::size_t records_in = 0;
  std::size_t records_out = 0;
  std::size_t questions_in = 0;
  std::size_t questions_out = 0;
};

/// Indices of retained records: the exact-matching attempts of every
/// question that has at least k consecutive (by attempt_index) exact matches.
inline std::vector<std::size_t> sft_retained_indices(std::span<const SftCandidate> cands, int k,
                                                     SftStats* stats = nullptr) {
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
  std::map<std::string, std::vector<std::size_t>> by_question;
  for (std::size_t i = 0; i < cands.size(); ++i) by_question[cands[i].question].push_back(i);

  std::vector<std::size_t> keep;
  std::size_t questions_out = 0;
  for (auto& [q, idx] : by_question) {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return cands[a].attempt_index < cands[b].attempt_index; });
    std::vector<std::size_t> matches;
    int run = 0, best = 0;
    std::optional<int> prev_attempt;
    for (std::size_t i : idx) {
      const auto& c = cands[i];
      bool ok = normalize_for_exact_match(c.candidate_sql) == normalize_for_exact_match(c.gold_sql);
      if (ok) {
        matches.push_back(i);
        run = (prev_attempt && *prev_attempt + 1 == c.attempt_index && run > 0) ? run + 1 : 1;
        prev_attempt = c.attempt_index;
      } else {
        run = 0;
        prev_attempt = c.attempt_index;
      }
      best = std::max(best, run);
    }
    if (best >= k) {
      ++questions_out;
      keep.insert(keep.end(), matches.begin(), matches.end());
    }
  }
  std::sort(keep.begin(), keep.end());
  if (stats) *stats = {cands.size(), keep.size(), by_question.size(), questions_out};
  return keep;
}

inline std::vector<SftCandidate> sft_filter(std::span<const SftCandidate> cands, int k = 3) {
  std::vector<SftCandidate> out;
  for (auto i : sft_retained_indices(cands, k)) out.push_back(cands[i]);
  return out;
}

}  // namespace sqlrl
