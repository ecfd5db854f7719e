#pragma once

// Query execution with warm-up, repeated timed runs, per-run timeouts and
// order-insensitive result comparison.
//
// Timed runs from every thread in the process go through one lock so that
// latency is measured under single-user load. Each execute() call opens and
// owns its own read-only connection.

#include <sqlite3.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "sqlrl/error.hpp"

namespace sqlrl {

enum class Engine { Sqlite, Mysql };

inline std::string_view to_string(Engine e) { return e == Engine::Sqlite ? "sqlite" : "mysql"; }

inline Engine parse_engine(std::string_view s) {
  if (s == "sqlite" || s == "sqlite3") return Engine::Sqlite;
  if (s == "mysql") return Engine::Mysql;
  throw Error(ErrorKind::InvalidArgument, "unknown engine '" + std::string(s) + "'");
}

struct DbHandle {
  std::string db_id;
  std::string source;
  Engine engine = Engine::Sqlite;
  std::string location;  // file path (sqlite) or connection string (mysql)
};

/// Maps (db_id, source, engine) to a database. An entry with an empty source
/// matches any source for its db_id.
class DbRegistry {
 public:
  DbRegistry() = default;
  explicit DbRegistry(std::vector<DbHandle> entries) : entries_(std::move(entries)) {}

  /// Manifest layout:
  ///   {"databases": [{"db_id": "...", "source": "...", "engine": "sqlite",
  ///                   "location": "relative/or/absolute.sqlite"}]}
  /// Relative sqlite locations resolve against the manifest's directory.
  static DbRegistry load(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw Error(ErrorKind::ConnectionError, "cannot open manifest " + manifest.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::MalformedInput, "manifest " + manifest.string() + ": " + e.what());
    }
    return from_json(j, manifest.parent_path());
  }

  static DbRegistry from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    if (!j.contains("databases") || !j["databases"].is_array())
      throw Error(ErrorKind::MalformedInput, "manifest needs a \"databases\" array");
    std::vector<DbHandle> entries;
    for (const auto& e : j["databases"]) {
      DbHandle h;
      h.db_id = e.at("db_id").get<std::string>();
      h.source = e.value("source", "");
      h.engine = parse_engine(e.value("engine", "sqlite"));
      h.location = e.contains("location") ? e["location"].get<std::string>() : e.value("path", "");
      if (h.engine == Engine::Sqlite && !h.location.empty() && std::filesystem::path(h.location).is_relative())
        h.location = (base_dir / h.location).lexically_normal().string();
      entries.push_back(std::move(h));
    }
    return DbRegistry(std::move(entries));
  }

  const DbHandle& resolve(std::string_view db_id, std::string_view source,
                          std::optional<Engine> engine = std::nullopt) const {
    const DbHandle* wildcard = nullptr;
    for (const auto& e : entries_) {
      if (e.db_id != db_id || (engine && e.engine != *engine)) continue;
      if (e.source == source) return e;
      // an empty source on either side matches anything
      if ((e.source.empty() || source.empty()) && !wildcard) wildcard = &e;
    }
    if (wildcard) return *wildcard;
    throw Error(ErrorKind::DbNotFound, "no database for db_id='" + std::string(db_id) + "' source='" +
                                           std::string(source) + "'" +
                                           (engine ? " engine=" + std::string(to_string(*engine)) : ""));
  }

  bool has_engine(Engine engine) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const DbHandle& h) { return h.engine == engine; });
  }

  const std::vector<DbHandle>& entries() const { return entries_; }

 private:
  std::vector<DbHandle> entries_;
};

using Cell = std::variant<std::monostate, std::int64_t, double, std::string>;
using Row = std::vector<Cell>;

enum class ExecStatus { Ok, SqlError, Timeout };

inline std::string_view to_string(ExecStatus s) {
  switch (s) {
    case ExecStatus::Ok: return "ok";
    case ExecStatus::SqlError: return "sql_error";
    case ExecStatus::Timeout: return "timeout";
  }
  return "";
}

struct ExecutionOutcome {
  ExecStatus status = ExecStatus::Ok;
  std::vector<Row> rows;
  std::vector<double> run_times_s;
  double mean_time_s = 0.0;
  std::string error;
};

struct TimingConfig {
  int warmup_runs = 1;
  int measured_runs = 5;
  double timeout_s = 30.0;

  void validate() const {
    if (warmup_runs < 0) throw Error(ErrorKind::InvalidArgument, "warmup_runs must be >= 0");
    if (measured_runs < 1) throw Error(ErrorKind::InvalidArgument, "measured_runs must be >= 1");
    if (!(timeout_s > 0)) throw Error(ErrorKind::InvalidArgument, "timeout_s must be > 0");
  }
};

/// Process-wide record of database runs. Disabled by default; tests switch
/// it on to check serialisation and that gated records never execute.
class ExecutionLog {
 public:
  struct Entry {
    std::string db_id;
    std::string sql;
    std::int64_t start_ns;
    std::int64_t end_ns;
    bool timed;
  };

  static ExecutionLog& instance() {
    static ExecutionLog log;
    return log;
  }

  void enable(bool on) {
    std::lock_guard lk(mu_);
    enabled_ = on;
  }
  void clear() {
    std::lock_guard lk(mu_);
    entries_.clear();
  }
  void record(Entry e) {
    std::lock_guard lk(mu_);
    if (enabled_) entries_.push_back(std::move(e));
  }
  std::vector<Entry> snapshot() const {
    std::lock_guard lk(mu_);
    return entries_;
  }

  /// True when no two timed entries overlap in wall-clock time.
  static bool timed_runs_disjoint(std::vector<Entry> entries) {
    std::erase_if(entries, [](const Entry& e) { return !e.timed; });
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.start_ns < b.start_ns; });
    for (std::size_t i = 1; i < entries.size(); ++i)
      if (entries[i].start_ns < entries[i - 1].end_ns) return false;
    return true;
  }

 private:
  mutable std::mutex mu_;
  bool enabled_ = false;
  std::vector<Entry> entries_;
};

/// Serialises timed runs across the process.
inline std::mutex& timing_lock() {
  static std::mutex m;
  return m;
}

inline std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

class Executor {
 public:
  virtual ~Executor() = default;
  /// Warm-up runs, then measured runs of the same statement under the
  /// timing lock. Rows come from the final run.
  virtual ExecutionOutcome execute(const DbHandle& db, std::string_view sql, const TimingConfig& cfg) = 0;
  /// One untimed run for correctness only; does not take the timing lock.
  virtual ExecutionOutcome execute_rows(const DbHandle& db, std::string_view sql, double timeout_s) = 0;
};

namespace detail {

class SqliteConnection {
 public:
  explicit SqliteConnection(const std::string& path) {
    if (!std::filesystem::exists(path))
      throw Error(ErrorKind::ConnectionError, "sqlite database not found: " + path);
    int rc = sqlite3_open_v2(path.c_str(), &db_, SQLITE_OPEN_READONLY | SQLITE_OPEN_NOMUTEX, nullptr);
    if (rc != SQLITE_OK) {
      std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
      sqlite3_close(db_);
      throw Error(ErrorKind::ConnectionError, "cannot open " + path + ": " + msg);
    }
  }
  SqliteConnection(const SqliteConnection&) = delete;
  SqliteConnection& operator=(const SqliteConnection&) = delete;
  ~SqliteConnection() { sqlite3_close(db_); }

  struct RunResult {
    ExecStatus status;
    std::vector<Row> rows;
    double elapsed_s;
    std::string error;
  };

  // Prepares, steps every row and finalises; end-to-end wall clock.
  RunResult run(std::string_view sql, double timeout_s) {
    RunResult res{ExecStatus::Ok, {}, 0.0, {}};
    const std::int64_t start = now_ns();
    deadline_ns_ = start + static_cast<std::int64_t>(timeout_s * 1e9);
    sqlite3_progress_handler(db_, 1000, &SqliteConnection::on_progress, this);

    const char* tail = sql.data();
    const char* end = sql.data() + sql.size();
    while (tail < end && res.status == ExecStatus::Ok) {
      sqlite3_stmt* stmt = nullptr;
      int rc = sqlite3_prepare_v2(db_, tail, static_cast<int>(end - tail), &stmt, &tail);
      if (rc != SQLITE_OK) {
        set_error(res, rc);
        break;
      }
      if (!stmt) continue;  // whitespace or comment
      std::vector<Row> rows;
      while ((rc = sqlite3_step(stmt)) == SQLITE_ROW) {
        const int ncol = sqlite3_column_count(stmt);
        Row row;
        row.reserve(static_cast<std::size_t>(ncol));
        for (int c = 0; c < ncol; ++c) row.push_back(read_cell(stmt, c));
        rows.push_back(std::move(row));
      }
      if (rc != SQLITE_DONE) set_error(res, rc);
      sqlite3_finalize(stmt);
      if (res.status == ExecStatus::Ok) res.rows = std::move(rows);
    }
    sqlite3_progress_handler(db_, 0, nullptr, nullptr);
    const std::int64_t stop = now_ns();
    res.elapsed_s = static_cast<double>(stop - start) * 1e-9;
    if (res.status == ExecStatus::Ok && res.elapsed_s > timeout_s) {
      res.status = ExecStatus::Timeout;
      res.error = "exceeded timeout";
    }
    if (res.status != ExecStatus::Ok) res.rows.clear();
    return res;
  }

 private:
  static int on_progress(void* self) {
    return now_ns() > static_cast<SqliteConnection*>(self)->deadline_ns_ ? 1 : 0;
  }

  void set_error(RunResult& res, int rc) {
    if (rc == SQLITE_INTERRUPT) {
      res.status = ExecStatus::Timeout;
      res.error = "interrupted at timeout";
    } else {
      res.status = ExecStatus::SqlError;
      res.error = sqlite3_errmsg(db_);
    }
  }

  static Cell read_cell(sqlite3_stmt* stmt, int c) {
    switch (sqlite3_column_type(stmt, c)) {
      case SQLITE_INTEGER: return static_cast<std::int64_t>(sqlite3_column_int64(stmt, c));
      case SQLITE_FLOAT: return sqlite3_column_double(stmt, c);
      case SQLITE_NULL: return std::monostate{};
      default: {
        const auto* p = static_cast<const char*>(sqlite3_column_blob(stmt, c));
        int n = sqlite3_column_bytes(stmt, c);
        return std::string(p ? p : "", static_cast<std::size_t>(n));
      }
    }
  }

  sqlite3* db_ = nullptr;
  std::int64_t deadline_ns_ = 0;
};

}  // namespace detail

/// Executes against SQLite files. MySQL handles are rejected with
/// ConnectionError because no MySQL client library is linked.
class SqliteExecutor : public Executor {
 public:
  ExecutionOutcome execute(const DbHandle& db, std::string_view sql, const TimingConfig& cfg) override {
    cfg.validate();
    require_sql(sql);
    auto conn = connect(db);
    ExecutionOutcome out;
    std::lock_guard lk(timing_lock());
    for (int w = 0; w < cfg.warmup_runs; ++w) {
      auto r = logged_run(*conn, db, sql, cfg.timeout_s, false);
      if (r.status != ExecStatus::Ok) return failed(r);
    }
    for (int m = 0; m < cfg.measured_runs; ++m) {
      auto r = logged_run(*conn, db, sql, cfg.timeout_s, true);
      if (r.status != ExecStatus::Ok) return failed(r);
      out.run_times_s.push_back(r.elapsed_s);
      if (m + 1 == cfg.measured_runs) out.rows = std::move(r.rows);
    }
    out.mean_time_s =
        std::accumulate(out.run_times_s.begin(), out.run_times_s.end(), 0.0) / static_cast<double>(out.run_times_s.size());
    return out;
  }

  ExecutionOutcome execute_rows(const DbHandle& db, std::string_view sql, double timeout_s) override {
    require_sql(sql);
    auto conn = connect(db);
    auto r = logged_run(*conn, db, sql, timeout_s, false);
    ExecutionOutcome out;
    out.status = r.status;
    out.error = r.error;
    out.rows = std::move(r.rows);
    return out;
  }

 private:
  static void require_sql(std::string_view sql) {
    if (sql.find_first_not_of(" \t\r\n") == std::string_view::npos)
      throw Error(ErrorKind::InvalidArgument, "empty SQL");
  }

  static std::unique_ptr<detail::SqliteConnection> connect(const DbHandle& db) {
    if (db.engine != Engine::Sqlite)
      throw Error(ErrorKind::ConnectionError, "engine " + std::string(to_string(db.engine)) +
                                                  " is not available in this build (db_id=" + db.db_id + ")");
    return std::make_unique<detail::SqliteConnection>(db.location);
  }

  static detail::SqliteConnection::RunResult logged_run(detail::SqliteConnection& conn, const DbHandle& db,
                                                        std::string_view sql, double timeout_s, bool timed) {
    const auto start = now_ns();
    auto r = conn.run(sql, timeout_s);
    ExecutionLog::instance().record({db.db_id, std::string(sql), start, now_ns(), timed});
    return r;
  }

  static ExecutionOutcome failed(detail::SqliteConnection::RunResult& r) {
    ExecutionOutcome out;
    out.status = r.status;
    out.error = std::move(r.error);
    return out;
  }
};

enum class CompareMode { Multiset, Set };

inline constexpr double kResultRelTol = 1e-6;

namespace detail {

inline bool is_number(const Cell& c) { return std::holds_alternative<std::int64_t>(c) || std::holds_alternative<double>(c); }

inline double as_double(const Cell& c) {
  return std::holds_alternative<std::int64_t>(c) ? static_cast<double>(std::get<std::int64_t>(c)) : std::get<double>(c);
}

// null < number < text; numbers compare by value after int/real unification.
inline int cell_rank(const Cell& c) {
  if (std::holds_alternative<std::monostate>(c)) return 0;
  if (is_number(c)) return 1;
  return 2;
}

inline bool cell_less(const Cell& a, const Cell& b) {
  int ra = cell_rank(a), rb = cell_rank(b);
  if (ra != rb) return ra < rb;
  if (ra == 1) {
    if (std::holds_alternative<std::int64_t>(a) && std::holds_alternative<std::int64_t>(b))
      return std::get<std::int64_t>(a) < std::get<std::int64_t>(b);
    return as_double(a) < as_double(b);
  }
  if (ra == 2) return std::get<std::string>(a) < std::get<std::string>(b);
  return false;
}

inline bool row_less(const Row& a, const Row& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), cell_less);
}

inline bool cell_equal(const Cell& a, const Cell& b) {
  if (cell_rank(a) != cell_rank(b)) return false;
  if (is_number(a)) {
    if (std::holds_alternative<std::int64_t>(a) && std::holds_alternative<std::int64_t>(b))
      return std::get<std::int64_t>(a) == std::get<std::int64_t>(b);
    double x = as_double(a), y = as_double(b);
    if (x == y) return true;
    if (std::isnan(x) || std::isnan(y)) return std::isnan(x) && std::isnan(y);
    return std::fabs(x - y) <= kResultRelTol * std::max(std::fabs(x), std::fabs(y));
  }
  return a == b;
}

inline bool row_equal(const Row& a, const Row& b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), cell_equal);
}

inline bool has_real(const std::vector<Row>& rows) {
  for (const auto& r : rows)
    for (const auto& c : r)
      if (std::holds_alternative<double>(c)) return true;
  return false;
}

}  // namespace detail

/// Order-insensitive comparison of two successful outcomes. Cells within a
/// row are positional; numbers compare after int/real unification with reals
/// equal within 1e-6 relative.
inline bool results_equal(const ExecutionOutcome& a, const ExecutionOutcome& b,
                          CompareMode mode = CompareMode::Multiset) {
  if (a.status != ExecStatus::Ok || b.status != ExecStatus::Ok)
    throw Error(ErrorKind::ComparisonOnFailure, "results_equal needs two successful executions");
  auto x = a.rows, y = b.rows;
  std::sort(x.begin(), x.end(), detail::row_less);
  std::sort(y.begin(), y.end(), detail::row_less);
  if (mode == CompareMode::Set) {
    x.erase(std::unique(x.begin(), x.end(), detail::row_equal), x.end());
    y.erase(std::unique(y.begin(), y.end(), detail::row_equal), y.end());
  }
  if (x.size() != y.size()) return false;
  if (std::equal(x.begin(), x.end(), y.begin(), detail::row_equal)) return true;
  if (!detail::has_real(x) && !detail::has_real(y)) return false;

  // Values within tolerance can sort differently; fall back to matching.
  constexpr std::size_t kMatchLimit = 5000;
  if (x.size() > kMatchLimit) return false;
  std::vector<bool> used(y.size(), false);
  for (const auto& row : x) {
    bool found = false;
    for (std::size_t k = 0; k < y.size(); ++k) {
      if (!used[k] && detail::row_equal(row, y[k])) {
        used[k] = true;
        found = true;
        break;
      }
    }
    if (!found) return false;
  }
  return true;
}

/// min(1, t_gold / t_pred).
inline double time_ratio(double t_gold_s, double t_pred_s) {
  if (!(t_pred_s > 0.0)) throw Error(ErrorKind::DegenerateTiming, "predicted time must be > 0");
  if (t_gold_s < 0.0) throw Error(ErrorKind::DegenerateTiming, "gold time must be >= 0");
  return std::min(1.0, t_gold_s / t_pred_s);
}

/// Timings below clock resolution are raised to this floor before any ratio.
inline constexpr double kMinTimingS = 1e-6;

inline double floor_timing(double t) { return std::max(t, kMinTimingS); }

}  // namespace sqlrl
