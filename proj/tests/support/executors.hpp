#pragma once

#include <functional>
#include <string>

#include "sqlrl/exec_harness.hpp"

namespace fixture {

/// Runs queries for real but reports scripted timings, so efficiency terms
/// can be pinned exactly.
class ScriptedTimingExecutor : public sqlrl::Executor {
 public:
  using TimeOf = std::function<double(std::string_view sql)>;

  ScriptedTimingExecutor(sqlrl::Executor& inner, TimeOf time_of) : inner_(inner), time_of_(std::move(time_of)) {}

  sqlrl::ExecutionOutcome execute(const sqlrl::DbHandle& db, std::string_view sql,
                                  const sqlrl::TimingConfig& cfg) override {
    auto o = inner_.execute(db, sql, cfg);
    if (o.status == sqlrl::ExecStatus::Ok) {
      const double t = time_of_(sql);
      o.run_times_s.assign(o.run_times_s.size(), t);
      o.mean_time_s = t;
    }
    return o;
  }

  sqlrl::ExecutionOutcome execute_rows(const sqlrl::DbHandle& db, std::string_view sql, double timeout_s) override {
    return inner_.execute_rows(db, sql, timeout_s);
  }

 private:
  sqlrl::Executor& inner_;
  TimeOf time_of_;
};

inline ScriptedTimingExecutor::TimeOf constant_time(double t) {
  return [t](std::string_view) { return t; };
}

}  // namespace fixture
