#include <gtest/gtest.h>

#include "../support/executors.hpp"
#include "../support/fixture.hpp"
#include "sqlrl/reward_engine.hpp"

using namespace sqlrl;

namespace {

const std::string kGold = "SELECT COUNT(*) FROM orders WHERE status = 'returned'";

std::string fenced(const std::string& sql) { return "```sql\n" + sql + "\n```"; }

GoldRecord gold(const std::string& sql = kGold, ThinkingMode m = ThinkingMode::Suppressed) {
  return GoldRecord{"shop", "fixture", m, sql};
}

RewardConfig fast_cfg() {
  RewardConfig c;
  c.timing = TimingConfig{0, 1, 30.0};
  return c;
}

struct Env {
  DbRegistry reg = fixture::Shop::get().registry();
  SqliteExecutor sqlite;
  fixture::ScriptedTimingExecutor equal{sqlite, fixture::constant_time(0.01)};
};

bool in_range(double total) { return total == -2.0 || total == -1.5 || total == 0.0 || (total > 3.0 && total <= 4.0); }

}  // namespace

TEST(Weights, Defaults) {
  RewardWeights w;
  EXPECT_EQ(w.format_pass, 1.0);
  EXPECT_EQ(w.format_fail, -2.0);
  EXPECT_EQ(w.exec_pass, 2.0);
  EXPECT_EQ(w.exec_fail, -2.5);
  EXPECT_EQ(w.schema_pass, 1.5);
  EXPECT_EQ(TimingConfig{}.timeout_s, 30.0);
}

TEST(Score, MissingThinkTagsInSlowMode) {
  Env env;
  RewardEngine eng(env.reg, env.equal, fast_cfg());
  auto b = eng.score_response(fenced(kGold), gold(kGold, ThinkingMode::Slow));
  EXPECT_EQ(b.total, -2.0);
  EXPECT_EQ(b.stage, RewardStage::FormatFail);
  EXPECT_EQ(b.sigma_e, 0.0);
}

TEST(Score, PerfectWithEqualTimings) {
  Env env;
  RewardEngine eng(env.reg, env.equal, fast_cfg());
  auto b = eng.score_response(fenced(kGold), gold());
  EXPECT_EQ(b.sigma_f, 1.0);
  EXPECT_EQ(b.sigma_e, 2.0);
  EXPECT_EQ(b.sigma_s, 0.0);
  EXPECT_EQ(b.sigma_t, 1.0);
  EXPECT_EQ(b.total, 4.0);
  EXPECT_EQ(b.stage, RewardStage::ExecOk);
  ASSERT_TRUE(b.outcomes.has_value());
}

TEST(Score, WrongResultSchemaSubset) {
  Env env;
  RewardEngine eng(env.reg, env.equal, fast_cfg());
  auto b = eng.score_response(fenced("SELECT COUNT(*) FROM orders WHERE status = 'pending'"), gold());
  EXPECT_EQ(b.sigma_f, 1.0);
  EXPECT_EQ(b.sigma_e, -2.5);
  EXPECT_EQ(b.sigma_s, 1.5);
  EXPECT_EQ(b.sigma_t, 0.0);
  EXPECT_EQ(b.total, 0.0);
  EXPECT_EQ(b.stage, RewardStage::ExecFailSchemaOk);
}

TEST(Score, WrongResultSchemaViolated) {
  Env env;
  RewardEngine eng(env.reg, env.equal, fast_cfg());
  auto b = eng.score_response(fenced("SELECT COUNT(*) FROM orders WHERE quantity = 'returned'"), gold());
  EXPECT_EQ(b.total, -1.5);
  EXPECT_EQ(b.stage, RewardStage::ExecFailSchemaBad);
}

TEST(Score, SqlErrorCountsAsExecutionFailure) {
  Env env;
  RewardEngine eng(env.reg, env.equal, fast_cfg());
  auto b = eng.score_response(fenced("SELECT COUNT(*) FROM orders WHERE statuz = 'returned'"), gold());
  EXPECT_EQ(b.sigma_e, -2.5);
  EXPECT_EQ(b.stage, RewardStage::ExecFailSchemaBad);
  EXPECT_EQ(b.outcomes->first.status, ExecStatus::SqlError);
}

TEST(Score, BadGoldRaises) {
  Env env;
  RewardEngine eng(env.reg, env.equal, fast_cfg());
  try {
    eng.score_response(fenced(kGold), gold("SELECT COUNT(*) FROM no_such_table WHERE status = 'returned'"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GoldExecutionError);
  }
}

TEST(Score, UnknownDatabase) {
  Env env;
  RewardEngine eng(env.reg, env.equal, fast_cfg());
  GoldRecord g = gold();
  g.db_id = "missing";
  try {
    eng.score_response(fenced(kGold), g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DbNotFound);
  }
}

// Every combination of (format valid, skeleton pass, exec match, schema
// subset) lands on one of the five branches. Unreachable combinations
// collapse onto the earliest failing gate.
TEST(ScoreProperty, SixteenCellTruthTable) {
  Env env;
  RewardEngine eng(env.reg, env.equal, fast_cfg());
  struct Case {
    bool skel, exec, subset;
    std::string sql;
  };
  const std::vector<Case> sqls = {
      {true, true, true, kGold},
      {true, true, false, "SELECT COUNT(*) FROM orders WHERE status = 'returned' AND quantity > 0"},
      {true, false, true, "SELECT COUNT(*) FROM orders WHERE status = 'pending'"},
      {true, false, false, "SELECT COUNT(*) FROM orders WHERE quantity = 'returned'"},
      {false, true, true, "SELECT 1818"},
      {false, true, false, "SELECT MAX(1818) FROM products p JOIN customers c ON p.id = c.id GROUP BY p.title LIMIT 1"},
      {false, false, true, "SELECT 1"},
      {false, false, false, "SELECT title, price FROM products JOIN customers ON products.id = customers.id"},
  };
  auto& log = ExecutionLog::instance();
  for (bool format_ok : {true, false})
    for (const auto& c : sqls) {
      std::string raw = format_ok ? fenced(c.sql) : c.sql;
      log.clear();
      log.enable(true);
      auto b = eng.score_response(raw, gold(kGold));
      log.enable(false);
      RewardStage want;
      double total;
      if (!format_ok) {
        want = RewardStage::FormatFail;
        total = -2.0;
      } else if (!c.skel) {
        want = RewardStage::SkeletonFail;
        total = -2.0;
      } else if (c.exec) {
        want = RewardStage::ExecOk;
        total = 4.0;
      } else if (c.subset) {
        want = RewardStage::ExecFailSchemaOk;
        total = 0.0;
      } else {
        want = RewardStage::ExecFailSchemaBad;
        total = -1.5;
      }
      EXPECT_EQ(b.stage, want) << c.sql << " format_ok=" << format_ok;
      EXPECT_EQ(b.total, total) << c.sql;
      EXPECT_EQ(b.total, b.sigma_f + b.sigma_e + b.sigma_s + b.sigma_t);
      if (format_ok) EXPECT_EQ(b.skeleton.passed, c.skel) << c.sql << " combined=" << b.skeleton.combined;
      bool gated = want == RewardStage::FormatFail || want == RewardStage::SkeletonFail;
      if (gated) {
        for (const auto& e : log.snapshot()) EXPECT_NE(e.sql, c.sql) << "gated record touched the database";
      }
    }
  log.clear();
}

TEST(ScoreProperty, SmallerPredTimeNeverLowersTotal) {
  Env env;
  double prev = -1e9;
  for (double tp : {0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005}) {
    fixture::ScriptedTimingExecutor ex(env.sqlite, [tp](std::string_view sql) {
      return sql.find("quantity > 0") != std::string_view::npos ? tp : 0.01;
    });
    RewardEngine eng(env.reg, ex, fast_cfg());
    auto b = eng.score_response(fenced("SELECT COUNT(*) FROM orders WHERE status = 'returned' AND quantity > 0"),
                                gold());
    EXPECT_EQ(b.stage, RewardStage::ExecOk);
    EXPECT_DOUBLE_EQ(b.sigma_t, std::min(1.0, 0.01 / tp));
    EXPECT_GE(b.total, prev);
    prev = b.total;
  }
  EXPECT_EQ(prev, 4.0);
}

TEST(ScoreProperty, RealTimingsStayInRange) {
  Env env;
  RewardEngine eng(env.reg, env.sqlite, fast_cfg());
  auto b = eng.score_response(fenced(kGold), gold());
  EXPECT_EQ(b.stage, RewardStage::ExecOk);
  EXPECT_GT(b.total, 3.0);
  EXPECT_LE(b.total, 4.0);
  EXPECT_TRUE(in_range(b.total));
}

TEST(Batch, FourPerfectCandidates) {
  Env env;
  RewardEngine eng(env.reg, env.equal, fast_cfg());
  std::vector<std::string> r(4, fenced(kGold));
  std::vector<GoldRecord> g(4, gold());
  auto out = eng.score_batch(r, g, 4);
  ASSERT_EQ(out.size(), 4u);
  for (const auto& x : out) {
    ASSERT_TRUE(x.reward.has_value());
    EXPECT_EQ(x.reward->total, 4.0);
  }
}

TEST(Batch, EmptyAndMismatched) {
  Env env;
  RewardEngine eng(env.reg, env.equal, fast_cfg());
  EXPECT_TRUE(eng.score_batch({}, {}).empty());
  EXPECT_THROW(eng.score_batch({"x"}, {}), Error);
}

TEST(Batch, MixedMatchesElementwise) {
  Env env;
  RewardEngine eng(env.reg, env.equal, fast_cfg());
  std::vector<std::string> r = {fenced(kGold), "no fence", fenced("SELECT COUNT(*) FROM orders WHERE status = 'pending'"),
                                fenced(kGold)};
  std::vector<GoldRecord> g = {gold(), gold(), gold(), gold()};
  g[3].db_id = "missing";
  auto out = eng.score_batch(r, g, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    ASSERT_TRUE(out[i].reward.has_value());
    EXPECT_EQ(out[i].reward->total, eng.score_response(r[i], g[i]).total);
  }
  ASSERT_FALSE(out[3].reward.has_value());
  EXPECT_EQ(out[3].error_kind, ErrorKind::DbNotFound);
}

TEST(Batch, ParallelScoringKeepsTimedRunsDisjoint) {
  Env env;
  RewardEngine eng(env.reg, env.sqlite, fast_cfg());
  std::vector<std::string> r;
  for (int i = 0; i < 16; ++i)
    r.push_back(fenced(i % 2 ? kGold : "SELECT COUNT(*) FROM orders WHERE status = 'pending'"));
  std::vector<GoldRecord> g(r.size(), gold());
  auto& log = ExecutionLog::instance();
  log.clear();
  log.enable(true);
  auto out = eng.score_batch(r, g, 8);
  log.enable(false);
  EXPECT_TRUE(ExecutionLog::timed_runs_disjoint(log.snapshot()));
  for (const auto& x : out) EXPECT_TRUE(x.reward.has_value());
  log.clear();
}
