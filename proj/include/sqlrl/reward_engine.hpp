#pragma once

// Hierarchical reward for a single model response:
//
//   format check  -> fail: format_fail
//   skeleton gate -> below tau: format_fail
//   execution     -> match gold: format_pass + exec_pass + w_t * min(1, t_gold/t_pred)
//                    otherwise: format_pass + exec_fail + (schema subset ? schema_pass : 0)

#include <atomic>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sqlrl/error.hpp"
#include "sqlrl/exec_harness.hpp"
#include "sqlrl/response_protocol.hpp"
#include "sqlrl/similarity.hpp"
#include "sqlrl/sql_analyzer.hpp"

namespace sqlrl {

struct RewardWeights {
  double format_pass = 1.0;
  double format_fail = -2.0;
  double exec_pass = 2.0;
  double exec_fail = -2.5;
  double schema_pass = 1.5;
  double efficiency = 1.0;  // multiplies the clamped time ratio
};

enum class RewardStage { FormatFail, SkeletonFail, ExecOk, ExecFailSchemaOk, ExecFailSchemaBad };

inline std::string_view to_string(RewardStage s) {
  switch (s) {
    case RewardStage::FormatFail: return "format_fail";
    case RewardStage::SkeletonFail: return "skeleton_fail";
    case RewardStage::ExecOk: return "exec_ok";
    case RewardStage::ExecFailSchemaOk: return "exec_fail_schema_ok";
    case RewardStage::ExecFailSchemaBad: return "exec_fail_schema_bad";
  }
  return "";
}

struct GoldRecord {
  std::string db_id;
  std::string source;
  ThinkingMode mode = ThinkingMode::Suppressed;
  std::string gold_sql;
};

struct RewardBreakdown {
  double sigma_f = 0.0;
  double sigma_e = 0.0;
  double sigma_s = 0.0;
  double sigma_t = 0.0;
  double total = 0.0;
  RewardStage stage = RewardStage::FormatFail;
  SimilarityScore skeleton;
  FormatVerdict format;
  std::optional<std::pair<ExecutionOutcome, ExecutionOutcome>> outcomes;  // (pred, gold)
};

struct RewardConfig {
  double alpha = kDefaultAlpha;
  double tau = kDefaultTau;
  RewardWeights weights;
  TimingConfig timing;
  CompareMode compare = CompareMode::Multiset;
  bool strict_format = false;
};

/// One element of a batch: either a breakdown or the error that stopped it.
struct BatchResult {
  std::optional<RewardBreakdown> reward;
  std::optional<ErrorKind> error_kind;
  std::string error_message;
};

class RewardEngine {
 public:
  RewardEngine(const DbRegistry& registry, Executor& executor, RewardConfig cfg = {})
      : registry_(registry), executor_(executor), cfg_(std::move(cfg)) {
    cfg_.timing.validate();
    if (!(cfg_.tau >= 0.0 && cfg_.tau <= 1.0)) throw Error(ErrorKind::InvalidArgument, "tau must lie in [0,1]");
    if (!(cfg_.alpha >= 0.0 && cfg_.alpha <= 1.0)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in [0,1]");
  }

  const RewardConfig& config() const { return cfg_; }

  RewardBreakdown score_response(std::string_view raw, const GoldRecord& gold) {
    const auto& w = cfg_.weights;
    RewardBreakdown b;
    auto finish = [&](RewardStage stage) {
      b.stage = stage;
      b.total = b.sigma_f + b.sigma_e + b.sigma_s + b.sigma_t;
      return b;
    };

    auto parsed = parse_response(raw, gold.db_id, gold.source, gold.mode);
    b.format = validate_format(parsed, cfg_.strict_format);
    if (!b.format.valid) {
      b.sigma_f = w.format_fail;
      return finish(RewardStage::FormatFail);
    }

    SqlSkeleton gold_skel;
    try {
      gold_skel = extract_skeleton(gold.gold_sql, true);
    } catch (const Error& e) {
      throw Error(ErrorKind::GoldExecutionError, "gold SQL does not tokenize: " + std::string(e.what()));
    }
    try {
      b.skeleton = skeleton_similarity(extract_skeleton(parsed.sql, true), gold_skel, cfg_.alpha, cfg_.tau);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::UnterminatedLiteral && e.kind() != ErrorKind::EmptyInput) throw;
      b.skeleton = SimilarityScore{0.0, 0.0, 0.0, cfg_.alpha, false};
    }
    if (!b.skeleton.passed) {
      b.sigma_f = w.format_fail;
      return finish(RewardStage::SkeletonFail);
    }
    b.sigma_f = w.format_pass;

    const DbHandle& db = registry_.resolve(gold.db_id, gold.source);
    ExecutionOutcome gold_out = gold_outcome(db, gold.gold_sql);
    ExecutionOutcome pred_out = executor_.execute(db, parsed.sql, cfg_.timing);

    bool matched = pred_out.status == ExecStatus::Ok && pred_out.mean_time_s <= cfg_.timing.timeout_s &&
                   results_equal(pred_out, gold_out, cfg_.compare);
    RewardStage stage;
    if (matched) {
      b.sigma_e = w.exec_pass;
      b.sigma_t = w.efficiency * time_ratio(floor_timing(gold_out.mean_time_s), floor_timing(pred_out.mean_time_s));
      stage = RewardStage::ExecOk;
    } else {
      b.sigma_e = w.exec_fail;
      b.sigma_t = 0.0;
      bool subset = false;
      try {
        subset = extract_schema_elements(parsed.sql).subset_of(extract_schema_elements(gold.gold_sql));
      } catch (const Error&) {
        subset = false;
      }
      b.sigma_s = subset ? w.schema_pass : 0.0;
      stage = subset ? RewardStage::ExecFailSchemaOk : RewardStage::ExecFailSchemaBad;
    }
    b.outcomes = std::make_pair(std::move(pred_out), std::move(gold_out));
    return finish(stage);
  }

  /// Element-wise score_response. Errors are captured per element; the
  /// batch itself never throws for a bad record.
  std::vector<BatchResult> score_batch(const std::vector<std::string>& responses, const std::vector<GoldRecord>& golds,
                                       unsigned jobs = 1) {
    if (responses.size() != golds.size())
      throw Error(ErrorKind::InvalidArgument, "responses and golds differ in length");
    std::vector<BatchResult> out(responses.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < responses.size(); i = next++) {
        try {
          out[i].reward = score_response(responses[i], golds[i]);
        } catch (const Error& e) {
          out[i].error_kind = e.kind();
          out[i].error_message = e.what();
        } catch (const std::exception& e) {
          out[i].error_kind = ErrorKind::ConnectionError;
          out[i].error_message = e.what();
        }
      }
    };
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(1, responses.size()))));
    if (jobs == 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
    }
    return out;
  }

 private:
  // Gold runs are memoised per (db, sql) so a group of candidates times the
  // gold query once.
  ExecutionOutcome gold_outcome(const DbHandle& db, const std::string& sql) {
    std::string key = db.db_id + '\x1f' + db.source + '\x1f' + db.location + '\x1f' + sql;
    std::shared_future<ExecutionOutcome> fut;
    std::optional<std::promise<ExecutionOutcome>> mine;
    {
      std::lock_guard lk(memo_mu_);
      auto it = gold_memo_.find(key);
      if (it == gold_memo_.end()) {
        mine.emplace();
        fut = mine->get_future().share();
        gold_memo_.emplace(key, fut);
      } else {
        fut = it->second;
      }
    }
    if (mine) {
      try {
        mine->set_value(executor_.execute(db, sql, cfg_.timing));
      } catch (...) {
        mine->set_exception(std::current_exception());
        std::lock_guard lk(memo_mu_);
        gold_memo_.erase(key);
      }
    }
    ExecutionOutcome out = fut.get();
    if (out.status != ExecStatus::Ok)
      throw Error(ErrorKind::GoldExecutionError,
                  "gold query failed on " + db.db_id + " (" + std::string(to_string(out.status)) + "): " + out.error);
    return out;
  }

  const DbRegistry& registry_;
  Executor& executor_;
  RewardConfig cfg_;
  std::mutex memo_mu_;
  std::map<std::string, std::shared_future<ExecutionOutcome>> gold_memo_;
};

}  // namespace sqlrl
