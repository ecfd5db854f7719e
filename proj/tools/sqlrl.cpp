// sqlrl: evaluation, reward scoring, reward service, SFT filtering and the
// toy GRPO simulator behind one command.
//
// Exit codes: 0 success, 1 usage or configuration, 2 dataset defect,
// 3 infrastructure (database connection, bind, output I/O).

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "sqlrl/grpo.hpp"
#include "sqlrl/json_io.hpp"
#include "sqlrl/metrics.hpp"
#include "sqlrl/reward_engine.hpp"
#include "sqlrl/service.hpp"

namespace fs = std::filesystem;
using namespace sqlrl;

namespace {

enum Exit { kOk = 0, kUsage = 1, kDataset = 2, kInfra = 3 };

struct ExitError : std::runtime_error {
  int code;
  ExitError(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return kUsage;
    case ErrorKind::ConnectionError: return kInfra;
    default: return kDataset;
  }
}

struct Common {
  std::string manifest;
  std::string engines = "sqlite";
  double tau = kDefaultTau;
  double alpha = kDefaultAlpha;
  int warmup = 1;
  int runs = 5;
  double timeout = 30.0;
  std::string out;
  unsigned jobs = 1;
  std::uint64_t seed = 0;
  bool verbose = false;
  bool strict = false;
  RewardWeights weights;

  TimingConfig timing() const {
    TimingConfig t{warmup, runs, timeout};
    t.validate();
    return t;
  }

  RewardConfig reward_config() const {
    RewardConfig c;
    c.alpha = alpha;
    c.tau = tau;
    c.weights = weights;
    c.timing = timing();
    c.strict_format = strict;
    return c;
  }

  std::vector<std::string> engine_list() const {
    std::vector<std::string> out;
    std::stringstream ss(engines);
    for (std::string e; std::getline(ss, e, ',');)
      if (!e.empty()) out.push_back(e);
    if (out.empty()) throw ExitError(kUsage, "--engine names no engine");
    return out;
  }

  DbRegistry registry() const {
    if (manifest.empty()) throw ExitError(kUsage, "--db-manifest is required");
    try {
      return DbRegistry::load(manifest);
    } catch (const Error& e) {
      throw ExitError(kUsage, "bad manifest " + manifest + ": " + e.what());
    }
  }
};

// Writes to the named file, or stdout for "" or "-".
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (!path.empty() && path != "-") {
      if (auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
      file_.open(path);
      if (!file_) throw ExitError(kInfra, "cannot write " + path);
    }
  }
  std::ostream& os() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ExitError(kUsage, "cannot read " + path);
  return in;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string dataset;
  std::string csv_dir;
  bool skip_bad_gold = false;
  bool lenient = false;
};

int cmd_eval(const Common& c, const EvalArgs& a) {
  auto in = open_input(a.dataset);
  std::size_t skipped = 0;
  auto records = read_jsonl<EvalRecord>(in, eval_record_from_json, a.lenient, &skipped);
  if (skipped) std::cerr << "warning: skipped " << skipped << " malformed line(s)\n";
  if (records.empty()) throw ExitError(kDataset, "no records in " + a.dataset);

  auto reg = c.registry();
  std::vector<Engine> engines;
  for (const auto& name : c.engine_list()) {
    Engine e = parse_engine(name);
    if (!reg.has_engine(e)) {
      std::cerr << "warning: engine " << name << " has no databases in the manifest; skipping\n";
      continue;
    }
    engines.push_back(e);
  }
  if (engines.empty()) throw ExitError(kUsage, "none of the requested engines appear in the manifest");

  SqliteExecutor executor;
  EvalConfig cfg;
  cfg.timing = c.timing();
  cfg.jobs = c.jobs;

  std::vector<MetricsReport> reports;
  bool bad_gold = false;
  for (Engine e : engines) {
    cfg.engine = e;
    auto results = evaluate_records(records, reg, executor, cfg);
    auto report = aggregate(results);
    report.engine = std::string(to_string(e));
    std::vector<TokenUsage> usage;
    for (const auto& r : records)
      if (r.tokens) usage.push_back(*r.tokens);
    if (!usage.empty() && usage.size() == records.size()) report.mean_token_cost = mean_token_cost(usage);

    for (const auto& r : results)
      if (r.bad_gold) {
        bad_gold = true;
        std::cerr << (a.skip_bad_gold ? "warning" : "error") << ": gold query of record " << r.id
                  << " failed on " << report.engine << " (" << r.gold_error << ")\n";
      }

    if (!a.csv_dir.empty()) {
      Sink csv((fs::path(a.csv_dir) / ("records_" + report.engine + ".csv")).string());
      csv.os() << csv_header() << '\n';
      for (const auto& r : results)
        if (!r.bad_gold) csv.os() << to_csv_row(r) << '\n';
    }
    reports.push_back(std::move(report));
  }

  auto emit = [&](const MetricsReport& r, const std::string& stem) {
    if (c.out.empty()) {
      std::cout << to_json(r).dump() << '\n';
    } else {
      Sink s((fs::path(c.out) / (stem + ".json")).string());
      s.os() << to_json(r).dump(2) << '\n';
    }
    std::cerr << r.engine << ": n=" << r.n << " em=" << r.em << " ex=" << r.ex << " ves=" << r.ves << '\n';
  };
  for (const auto& r : reports) emit(r, "metrics_" + r.engine);
  if (reports.size() > 1) emit(average_reports(reports), "metrics_average");

  if (bad_gold && !a.skip_bad_gold) return kDataset;
  return kOk;
}

// --- reward ----------------------------------------------------------------

struct RewardArgs {
  std::string input;
  std::string response;
  std::string response_file;
  std::string db_id;
  std::string source;
  std::string mode;
  std::string gold_sql;
};

int cmd_reward(const Common& c, const RewardArgs& a) {
  auto reg = c.registry();
  SqliteExecutor executor;
  RewardEngine engine(reg, executor, c.reward_config());
  Sink sink(c.out);

  if (!a.input.empty()) {
    auto in = open_input(a.input);
    auto reqs = read_jsonl<RewardRequest>(in, reward_request_from_json);
    std::vector<std::string> responses;
    std::vector<GoldRecord> golds;
    for (auto& r : reqs) {
      responses.push_back(std::move(r.response));
      golds.push_back(std::move(r.gold));
    }
    int rc = kOk;
    for (const auto& br : engine.score_batch(responses, golds, c.jobs)) {
      if (br.reward) {
        sink.os() << to_json(*br.reward, c.verbose).dump() << '\n';
      } else {
        sink.os() << error_json(*br.error_kind, br.error_message).dump() << '\n';
        rc = std::max(rc, exit_code_for(*br.error_kind));
      }
    }
    return rc;
  }

  std::string response = a.response;
  if (!a.response_file.empty()) {
    auto in = open_input(a.response_file);
    std::stringstream ss;
    ss << in.rdbuf();
    response = ss.str();
  }
  if (response.empty() || a.db_id.empty() || a.gold_sql.empty())
    throw ExitError(kUsage, "reward needs --input, or --response/--response-file with --db-id and --gold-sql");
  GoldRecord gold{a.db_id, a.source, parse_thinking_mode(a.mode), a.gold_sql};
  sink.os() << to_json(engine.score_response(response, gold), c.verbose).dump() << '\n';
  return kOk;
}

// --- serve -----------------------------------------------------------------

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
};

int cmd_serve(const Common& c, const ServeArgs& a) {
  // Block termination signals before any thread starts so only the waiter
  // below receives them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  auto reg = c.registry();
  SqliteExecutor executor;
  RewardEngine engine(reg, executor, c.reward_config());
  RewardService service(engine, c.verbose);
  int port = service.bind(a.host, a.port);
  std::cerr << "listening on " << a.host << ":" << port << std::endl;

  std::jthread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    std::cerr << "signal " << sig << ", shutting down" << std::endl;
    service.stop();
  });
  service.listen();
  // Wake the waiter if the server stopped on its own.
  if (waiter.joinable()) pthread_kill(waiter.native_handle(), SIGTERM);
  return kOk;
}

// --- sft-filter ------------------------------------------------------------

struct SftArgs {
  std::string input;
  int k = 3;
  bool lenient = false;
};

int cmd_sft_filter(const Common& c, const SftArgs& a) {
  if (a.k < 1) throw ExitError(kUsage, "--k must be >= 1");
  auto in = open_input(a.input);
  std::size_t skipped = 0;
  std::vector<json> raw;
  auto cands = read_jsonl<SftCandidate>(in, sft_candidate_from_json, a.lenient, &skipped, &raw);
  SftStats st;
  auto keep = sft_retained_indices(cands, a.k, &st);
  Sink sink(c.out);
  for (auto i : keep) sink.os() << raw[i].dump() << '\n';
  json stats = {{"records_in", st.records_in},     {"records_out", st.records_out},
                {"questions_in", st.questions_in}, {"questions_out", st.questions_out},
                {"malformed_skipped", skipped},    {"k", a.k}};
  std::cerr << stats.dump() << '\n';
  return kOk;
}

// --- sim -------------------------------------------------------------------

struct SimArgs {
  std::string pool;
  std::string rewards = "4,-2";
  std::string db_id;
  std::string source;
  std::string mode;
  std::string gold_sql;
  int steps = 200;
  double lr = 0.1;
  int group_size = 8;
  double epsilon = 0.2;
  double beta = 0.04;
};

int cmd_sim(const Common& c, const SimArgs& a) {
  grpo::SimulationConfig cfg;
  cfg.steps = a.steps;
  cfg.learning_rate = a.lr;
  cfg.seed = c.seed;
  cfg.grpo.group_size = a.group_size;
  cfg.grpo.epsilon = a.epsilon;
  cfg.grpo.beta = a.beta;

  std::vector<grpo::TrajectoryPoint> traj;
  std::vector<double> table;
  if (!a.pool.empty()) {
    if (a.db_id.empty() || a.gold_sql.empty()) throw ExitError(kUsage, "--pool needs --db-id and --gold-sql");
    auto in = open_input(a.pool);
    std::vector<std::string> pool;
    for (std::string line; std::getline(in, line);) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      auto j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.contains("response") || !j["response"].is_string())
        throw ExitError(kDataset, "pool lines must be objects with a \"response\" string");
      pool.push_back(j["response"].get<std::string>());
    }
    auto reg = c.registry();
    SqliteExecutor executor;
    RewardEngine engine(reg, executor, c.reward_config());
    GoldRecord gold{a.db_id, a.source, parse_thinking_mode(a.mode), a.gold_sql};
    traj = grpo::simulate_training(pool, gold, engine, cfg, &table);
  } else {
    std::stringstream ss(a.rewards);
    for (std::string x; std::getline(ss, x, ',');) {
      try {
        table.push_back(std::stod(x));
      } catch (const std::exception&) {
        throw ExitError(kUsage, "--rewards must be a comma-separated list of numbers");
      }
    }
    traj = grpo::simulate_training(table.size(), [&](std::size_t k) { return table[k]; }, cfg);
  }
  Sink sink(c.out);
  for (const auto& p : traj) sink.os() << to_json(p).dump() << '\n';
  std::cerr << "pool rewards:";
  for (double r : table) std::cerr << ' ' << r;
  std::cerr << "\nfinal probs:";
  for (double p : traj.empty() ? std::vector<double>{} : traj.back().probs) std::cerr << ' ' << p;
  std::cerr << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-to-SQL reward scoring, evaluation and GRPO tooling"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML configuration file; command-line flags win");
  std::string write_config;
  app.add_option("--write-config", write_config, "Write the effective configuration to this file and exit")
      ->configurable(false);

  Common c;
  app.add_option("--db-manifest", c.manifest, "JSON manifest mapping db_id/source to databases")
      ->envname("SQLRL_DB_MANIFEST")
      ->check(CLI::ExistingFile);
  app.add_option("--engine", c.engines, "Comma-separated engines to evaluate (sqlite,mysql)")
      ->envname("SQLRL_ENGINE")
      ->capture_default_str();
  app.add_option("--tau", c.tau, "Skeleton gate threshold")
      ->envname("SQLRL_TAU")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app.add_option("--alpha", c.alpha, "Weight of the character match ratio in skeleton similarity")
      ->envname("SQLRL_ALPHA")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app.add_option("--warmup", c.warmup, "Unmeasured runs before timing")
      ->envname("SQLRL_WARMUP")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app.add_option("--runs", c.runs, "Measured runs per query")
      ->envname("SQLRL_RUNS")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--timeout", c.timeout, "Per-run timeout in seconds")
      ->envname("SQLRL_TIMEOUT")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--out", c.out, "Output path (directory for eval, file otherwise; stdout when absent)")
      ->envname("SQLRL_OUT");
  app.add_option("--jobs", c.jobs, "Worker threads")->envname("SQLRL_JOBS")->capture_default_str();
  app.add_option("--seed", c.seed, "Random seed")->envname("SQLRL_SEED")->capture_default_str();
  app.add_flag("--verbose", c.verbose, "Include similarity and execution details in reward JSON")
      ->envname("SQLRL_VERBOSE");
  app.add_flag("--strict-format", c.strict, "Flag extra think pairs as malformed")->envname("SQLRL_STRICT_FORMAT");
  app.add_option("--w-format-pass", c.weights.format_pass)->group("Reward weights")->capture_default_str();
  app.add_option("--w-format-fail", c.weights.format_fail)->group("Reward weights")->capture_default_str();
  app.add_option("--w-exec-pass", c.weights.exec_pass)->group("Reward weights")->capture_default_str();
  app.add_option("--w-exec-fail", c.weights.exec_fail)->group("Reward weights")->capture_default_str();
  app.add_option("--w-schema-pass", c.weights.schema_pass)->group("Reward weights")->capture_default_str();
  app.add_option("--w-efficiency", c.weights.efficiency)->group("Reward weights")->capture_default_str();

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Compute EM/EX/VES and error histograms over a JSONL dataset");
  eval->add_option("--dataset", ea.dataset, "JSONL eval records")
      ->envname("SQLRL_DATASET")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--csv", ea.csv_dir, "Directory for per-record CSV files");
  eval->add_flag("--skip-bad-gold", ea.skip_bad_gold, "Report failing gold queries without failing the run");
  eval->add_flag("--lenient", ea.lenient, "Skip malformed dataset lines");

  RewardArgs ra;
  auto* reward = app.add_subcommand("reward", "Score one response or a JSONL batch");
  reward->add_option("--input", ra.input, "JSONL of {response, db_id, source, mode, gold_sql}")
      ->check(CLI::ExistingFile);
  reward->add_option("--response", ra.response, "Raw model response text");
  reward->add_option("--response-file", ra.response_file, "File holding the raw response")->check(CLI::ExistingFile);
  reward->add_option("--db-id", ra.db_id);
  reward->add_option("--source", ra.source);
  reward->add_option("--mode", ra.mode, "suppressed | fast | slow");
  reward->add_option("--gold-sql", ra.gold_sql);

  ServeArgs sa;
  auto* serve = app.add_subcommand("serve", "Run the HTTP reward service");
  serve->add_option("--host", sa.host)->envname("SQLRL_HOST")->capture_default_str();
  serve->add_option("--port", sa.port, "0 picks a free port")->envname("SQLRL_PORT")->capture_default_str();

  SftArgs fa;
  auto* sft = app.add_subcommand("sft-filter", "Keep reasoning traces with k consecutive exact matches");
  sft->add_option("--input", fa.input, "JSONL of candidates")->required()->check(CLI::ExistingFile);
  sft->add_option("--k", fa.k, "Required run of consecutive exact matches")->capture_default_str();
  sft->add_flag("--lenient", fa.lenient, "Skip malformed lines");

  SimArgs ma;
  auto* sim = app.add_subcommand("sim", "Train a toy categorical policy with GRPO");
  sim->add_option("--pool", ma.pool, "JSONL of {response}; scored once against the gold record")
      ->check(CLI::ExistingFile);
  sim->add_option("--rewards", ma.rewards, "Reward table when no pool is given")->capture_default_str();
  sim->add_option("--db-id", ma.db_id);
  sim->add_option("--source", ma.source);
  sim->add_option("--mode", ma.mode);
  sim->add_option("--gold-sql", ma.gold_sql);
  sim->add_option("--steps", ma.steps)->check(CLI::NonNegativeNumber)->capture_default_str();
  sim->add_option("--lr", ma.lr)->capture_default_str();
  sim->add_option("--group-size", ma.group_size)->check(CLI::PositiveNumber)->capture_default_str();
  sim->add_option("--epsilon", ma.epsilon)->capture_default_str();
  sim->add_option("--beta", ma.beta)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  if (!write_config.empty()) {
    // unset paths are left out so the file loads back through the existence checks
    std::istringstream all(app.config_to_str(true, false));
    std::ofstream out(write_config);
    for (std::string line; std::getline(all, line);)
      if (!line.ends_with("=\"\"")) out << line << '\n';
    return kOk;
  }

  try {
    if (*eval) return cmd_eval(c, ea);
    if (*reward) return cmd_reward(c, ra);
    if (*serve) return cmd_serve(c, sa);
    if (*sft) return cmd_sft_filter(c, fa);
    if (*sim) return cmd_sim(c, ma);
  } catch (const ExitError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInfra;
  }
  return kUsage;
}
