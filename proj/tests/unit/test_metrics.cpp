#include <gtest/gtest.h>

#include <fstream>

#include "../support/executors.hpp"
#include "../support/fixture.hpp"
#include "../support/sft_synth.hpp"
#include "corpus.hpp"
#include "sqlrl/json_io.hpp"
#include "sqlrl/metrics.hpp"

using namespace sqlrl;

namespace {

std::vector<EvalRecord> load_eval20() {
  std::ifstream in(fixture::fixtures_dir() / "eval20.jsonl");
  return read_jsonl<EvalRecord>(in, eval_record_from_json);
}

EvalRecord rec(std::string id, std::string gold, std::string pred) {
  EvalRecord r;
  r.id = std::move(id);
  r.db_id = "shop";
  r.source = "fixture";
  r.gold_sql = std::move(gold);
  r.pred_sql = std::move(pred);
  return r;
}

EvalConfig quick() {
  EvalConfig c;
  c.timing = TimingConfig{0, 1, 30};
  return c;
}

}  // namespace

TEST(ExactSetMatch, Examples) {
  const char* q = "SELECT a FROM t WHERE a = 1 AND b = 2";
  EXPECT_TRUE(exact_set_match(q, q));
  EXPECT_TRUE(exact_set_match(q, "SELECT a FROM t WHERE b = 2 AND a = 1"));
  EXPECT_FALSE(exact_set_match("SELECT a FROM t LIMIT 5", "SELECT a FROM t LIMIT 6"));
  EXPECT_FALSE(exact_set_match("SELECT a FROM t", "SELECT DISTINCT a FROM t"));
  EXPECT_FALSE(exact_set_match(q, "SELECT a FROM t WHERE a = 1 OR b = 2"));
}

TEST(ExactSetMatch, Reflexive) {
  for (const auto& q : query_corpus()) EXPECT_TRUE(exact_set_match(q, q)) << q;
}

TEST(ExactSetMatch, HandLabels) {
  std::ifstream in(fixture::fixtures_dir() / "eval20.jsonl");
  for (std::string line; std::getline(in, line);) {
    auto j = json::parse(line);
    EXPECT_EQ(exact_set_match(j["gold_sql"].get<std::string>(), j["pred_sql"].get<std::string>()),
              j["oracle_em"].get<bool>())
        << j["id"];
  }
}

TEST(Classify, OperatorRow) {
  auto c = classify_error(
      "SELECT COUNT(DISTINCT T1.ID) FROM Patient AS T1 INNER JOIN Laboratory AS T2 ON T1.ID = T2.ID WHERE T2.FG <= 150 "
      "OR T2.FG >= 450 AND T1.Birthday > '1980-01-01'",
      "SELECT COUNT(DISTINCT T1.ID) FROM Patient AS T1 JOIN Laboratory AS T2 ON T1.ID = T2.ID WHERE T1.Birthday > "
      "'1980-01-01' AND (T2.FG < 150 OR T2.FG > 450)");
  EXPECT_EQ(c, std::set<ErrorClass>{ErrorClass::Operator});
}

TEST(Classify, TableRow) {
  auto c = classify_error("SELECT COUNT(driverId) FROM driverStandings WHERE raceId = 18",
                          "SELECT COUNT(DISTINCT T1.driverId) FROM results AS T1 WHERE T1.raceId = 18");
  EXPECT_TRUE(c.count(ErrorClass::Table));
  EXPECT_FALSE(c.count(ErrorClass::Clause));
  EXPECT_FALSE(c.count(ErrorClass::Subquery));
}

TEST(Classify, ClauseRow) {
  auto c = classify_error(
      "SELECT T2.Description FROM transactions_1k AS T1 INNER JOIN products AS T2 ON T1.ProductID = T2.ProductID "
      "ORDER BY T1.Amount DESC LIMIT 5",
      "SELECT T2.Description FROM transactions_1k AS T1 JOIN products AS T2 ON T1.ProductID = T2.ProductID GROUP BY "
      "T1.ProductID ORDER BY SUM(T1.Amount) DESC LIMIT 5");
  EXPECT_TRUE(c.count(ErrorClass::Clause));
  EXPECT_TRUE(c.count(ErrorClass::Function));
  EXPECT_FALSE(c.count(ErrorClass::Subquery));
  EXPECT_FALSE(c.count(ErrorClass::Table));
}

TEST(Classify, SubqueryRow) {
  auto c = classify_error(
      "SELECT player_api_id FROM Player_Attributes WHERE SUBSTR(`date`, 1, 4) = '2010' ORDER BY overall_rating DESC "
      "LIMIT 1",
      "SELECT player_api_id FROM Player_Attributes WHERE substr(date,1,4) = '2010' AND overall_rating = (SELECT "
      "MAX(overall_rating) FROM Player_Attributes WHERE substr(date,1,4) = '2010')");
  EXPECT_TRUE(c.count(ErrorClass::Subquery));
}

TEST(Classify, ValueOnly) {
  auto c = classify_error("SELECT city FROM customers WHERE id = 7", "SELECT city FROM customers WHERE id = 8");
  EXPECT_EQ(c, std::set<ErrorClass>{ErrorClass::Value});
}

TEST(Classify, SelfComparisonIsEmpty) {
  for (const auto& q : query_corpus()) EXPECT_TRUE(classify_error(q, q).empty()) << q;
}

TEST(Ves, Factor) {
  EXPECT_EQ(ves_factor(true, 0.5, 0.5), 1.0);
  EXPECT_EQ(ves_factor(true, 4.0, 1.0), 2.0);
  EXPECT_EQ(ves_factor(false, 4.0, 1.0), 0.0);
  EXPECT_EQ(ves_factor(true, 1.0, 4.0), 0.5);
}

TEST(Pgr, Examples) {
  EXPECT_NEAR(performance_gap_recovered(0.5, 0.4, 0.6), 0.5, 1e-12);
  EXPECT_EQ(performance_gap_recovered(0.6, 0.4, 0.6), 1.0);
  EXPECT_EQ(performance_gap_recovered(0.4, 0.4, 0.6), 0.0);
  try {
    performance_gap_recovered(0.5, 0.4, 0.4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateGap);
  }
}

TEST(Tep, Examples) {
  EXPECT_NEAR(token_elasticity(0.55, 0.5, 1100.0, 1000.0), 1.0, 1e-12);
  EXPECT_EQ(token_elasticity(0.5, 0.5, 1200.0, 1000.0), 0.0);
  EXPECT_NEAR(token_elasticity(0.6, 0.5, 900.0, 1000.0), -2.0, 1e-12);
  try {
    token_elasticity(0.6, 0.5, 1000.0, 1000.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateTokens);
  }
}

TEST(Tep, AggregateFormUsesMultiplier) {
  // L = L_in + mu * L_out; base mean (1000 + 2*500)/10 = 200, method (1000 + 2*600)/10 = 220
  TokenUsage base{1000, 500, 2.0}, method{1000, 600, 2.0};
  EXPECT_NEAR(token_elasticity(0.55, 0.5, method, base, 10), 1.0, 1e-12);
  std::vector<TokenUsage> u = {{100, 10, 3.0}, {200, 20, 3.0}};
  EXPECT_DOUBLE_EQ(mean_token_cost(u), (130.0 + 260.0) / 2.0);
}

TEST(Eval, ThreeOfFourMatch) {
  auto reg = fixture::Shop::get().registry();
  SqliteExecutor ex;
  std::vector<EvalRecord> r = {
      rec("a", "SELECT COUNT(*) FROM customers WHERE city = 'Tabuk'", "SELECT COUNT(*) FROM customers WHERE city = 'Tabuk'"),
      rec("b", "SELECT title FROM products WHERE id = 3", "SELECT title FROM products WHERE id = 3"),
      rec("c", "SELECT MAX(price) FROM products", "SELECT MAX(price) FROM products"),
      rec("d", "SELECT name FROM customers WHERE city = 'Abha' LIMIT 3",
          "SELECT name FROM customers WHERE city = 'Riyadh' LIMIT 3")};
  EXPECT_EQ(execution_accuracy(r, reg, ex, quick()), 0.75);
}

TEST(Eval, AllCorrectAndAllBroken) {
  auto reg = fixture::Shop::get().registry();
  SqliteExecutor ex;
  auto records = load_eval20();
  for (auto& r : records) r.pred_sql = r.gold_sql;
  EXPECT_EQ(execution_accuracy(records, reg, ex, quick()), 1.0);
  for (auto& r : records) r.pred_sql = "SELECT * FROM missing_table";
  EXPECT_EQ(execution_accuracy(records, reg, ex, quick()), 0.0);
}

TEST(Eval, VesEqualsExWhenTimingsEqual) {
  auto reg = fixture::Shop::get().registry();
  SqliteExecutor sqlite;
  fixture::ScriptedTimingExecutor ex(sqlite, fixture::constant_time(0.002));
  auto report = evaluate(load_eval20(), reg, ex, quick());
  EXPECT_EQ(report.ves, report.ex);
  EXPECT_EQ(report.n, 20u);
}

TEST(Eval, VesFactorTwoWhenPredFourTimesFaster) {
  auto reg = fixture::Shop::get().registry();
  SqliteExecutor sqlite;
  fixture::ScriptedTimingExecutor ex(sqlite, [](std::string_view sql) {
    return sql.find("LIMIT 1") != std::string_view::npos ? 0.001 : 0.004;
  });
  std::vector<EvalRecord> r = {rec("x", "SELECT MAX(price) FROM products", "SELECT price FROM products ORDER BY price DESC LIMIT 1")};
  auto results = evaluate_records(r, reg, ex, quick());
  ASSERT_TRUE(results[0].ex_match);
  EXPECT_EQ(results[0].ves, 2.0);
  EXPECT_EQ(*results[0].time_ratio, 4.0);
}

TEST(Eval, BadGoldIsReportedNotScored) {
  auto reg = fixture::Shop::get().registry();
  SqliteExecutor ex;
  std::vector<EvalRecord> r = {rec("good", "SELECT 1", "SELECT 1"), rec("bad", "SELECT * FROM nope", "SELECT 1")};
  auto report = evaluate(r, reg, ex, quick());
  EXPECT_EQ(report.n, 1u);
  EXPECT_EQ(report.ex, 1.0);
  EXPECT_EQ(report.bad_gold_ids, std::vector<std::string>{"bad"});
}

TEST(Eval, ParallelMatchesSerial) {
  auto reg = fixture::Shop::get().registry();
  SqliteExecutor ex;
  auto records = load_eval20();
  auto c1 = quick();
  auto c8 = quick();
  c8.jobs = 8;
  auto a = evaluate_records(records, reg, ex, c1);
  auto b = evaluate_records(records, reg, ex, c8);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(a[i].em, b[i].em);
    EXPECT_EQ(a[i].ex_match, b[i].ex_match);
    EXPECT_EQ(a[i].error_classes, b[i].error_classes);
  }
}

TEST(Eval, DifficultyBreakdownAndHistogram) {
  auto reg = fixture::Shop::get().registry();
  SqliteExecutor ex;
  auto report = evaluate(load_eval20(), reg, ex, quick());
  std::size_t n = 0;
  for (const auto& [k, b] : report.by_difficulty) n += b.n;
  EXPECT_EQ(n, 20u);
  EXPECT_EQ(report.by_difficulty.count("simple"), 1u);
  std::size_t classified = 0;
  for (const auto& [c, cnt] : report.error_histogram) classified += cnt;
  EXPECT_GT(classified, 0u);
}

TEST(Sft, Examples) {
  const std::string g = "SELECT a FROM t";
  auto mk = [&](std::vector<bool> ok) {
    std::vector<SftCandidate> c;
    for (int i = 0; i < static_cast<int>(ok.size()); ++i)
      c.push_back({"q", "r", ok[i] ? "select a  from t" : "SELECT b FROM t", g, i});
    return c;
  };
  EXPECT_EQ(sft_filter(mk({true, true, true})).size(), 3u);
  EXPECT_TRUE(sft_filter(mk({true, false, true})).empty());
  EXPECT_EQ(sft_filter(mk({true}), 1).size(), 1u);
  EXPECT_THROW(sft_filter(mk({true}), 0), Error);
}

TEST(Sft, NormalisationKeepsLiteralAndIdentifierCase) {
  EXPECT_EQ(normalize_for_exact_match("SELECT  Name\nFROM T WHERE x = 'A';"),
            normalize_for_exact_match("select Name from T where x = 'A'"));
  EXPECT_NE(normalize_for_exact_match("SELECT Name FROM T"), normalize_for_exact_match("SELECT name FROM T"));
  EXPECT_NE(normalize_for_exact_match("SELECT a FROM t WHERE x = 'A'"),
            normalize_for_exact_match("SELECT a FROM t WHERE x = 'a'"));
}

TEST(Sft, SyntheticRetention) {
  auto cands = fixture::synthetic_sft();
  ASSERT_EQ(cands.size(), fixture::kSftRecords);
  SftStats st;
  auto idx = sft_retained_indices(cands, 3, &st);
  EXPECT_EQ(idx.size(), fixture::kSftRetained);
  EXPECT_EQ(st.questions_out, 100u);
}

TEST(Sft, SubsetAndIdempotent) {
  auto cands = fixture::synthetic_sft(5);
  auto once = sft_filter(cands, 3);
  auto twice = sft_filter(once, 3);
  ASSERT_EQ(once.size(), twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) {
    EXPECT_EQ(once[i].candidate_sql, twice[i].candidate_sql);
    EXPECT_EQ(once[i].attempt_index, twice[i].attempt_index);
  }
}

TEST(Report, AverageOnlyOverEngines) {
  MetricsReport a, b;
  a.engine = "sqlite";
  a.n = 10;
  a.ex = 0.5;
  a.ves = 0.4;
  b.engine = "mysql";
  b.n = 10;
  b.ex = 0.7;
  b.ves = 0.6;
  std::vector<MetricsReport> rs = {a, b};
  auto avg = average_reports(rs);
  EXPECT_NEAR(avg.ex, 0.6, 1e-12);
  EXPECT_NEAR(avg.ves, 0.5, 1e-12);
}
