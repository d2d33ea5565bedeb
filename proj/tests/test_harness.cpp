#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "busrl/config.hpp"
#include "busrl/errors.hpp"
#include "busrl/harness.hpp"
#include "busrl/plots.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace busrl;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::vector<json> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("busrl_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Small enough that a run takes well under a second.
fs::path tiny_config(const fs::path& dir) {
  const fs::path p = dir / "tiny.json";
  std::ofstream(p) << R"({
    // comments are allowed
    "env": {"episode_length": 600},
    "ppo": {"horizon": 96, "num_envs": 2, "hidden": [8], "epochs": 1, "minibatch": 32},
    "setter": {"hidden": [8]},
    "harness": {"total_steps": 480, "eval_episodes": 1}
  })";
  return p;
}

ExperimentSpec tiny_spec(const fs::path& dir, Method method) {
  ExperimentSpec spec;
  spec.method = method;
  spec.config_path = tiny_config(dir).string();
  spec.output_dir = (dir / "runs").string();
  return spec;
}

std::set<std::string> keys_of(const json& rec) {
  std::set<std::string> k;
  for (auto it = rec.begin(); it != rec.end(); ++it) k.insert(it.key());
  return k;
}

}  // namespace

TEST_CASE("config parsing: defaults, overrides and errors") {
  const AppConfig d = parse_config("{}");
  CHECK(d.env.num_buses == 14);
  CHECK(d.env.headway == 43);
  CHECK(d.ppo.hidden == std::vector<int>{64, 64});
  const AppConfig c = parse_config(R"({"env": {"num_stations": 12, "num_buses": 12}})");
  CHECK(c.env.headway == 60);  // re-derived when not given
  const AppConfig h = parse_config(R"({"env": {"headway": 30}})");
  CHECK(h.env.headway == 30);
  CHECK_THROWS_AS(parse_config(R"({"env": {"nonsense": 1}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"extra": {}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"env": {"num_buses": "x"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"env": {"num_buses": 0}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"dr": {"min_delay": 9, "max_delay": 1}})"), ConfigError);
  CHECK_THROWS_AS(parse_config("[1, 2"), ConfigError);
  // Round trip through the dump.
  CHECK(dump_config(parse_config(dump_config(c))) == dump_config(c));
}

TEST_CASE("shipped default config equals the built-in defaults") {
  CHECK(dump_config(load_config(BUSRL_CONFIG_DIR "/default.json")) == dump_config(parse_config("{}")));
}

TEST_CASE("method names") {
  for (Method m : {Method::kNone, Method::kBudget, Method::kStagnancy, Method::kSetter})
    CHECK(method_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(method_from_string("bogus"), ConfigError);
}

TEST_CASE("spec validation") {
  ExperimentSpec spec;
  spec.seeds.clear();
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.seeds = {1};
  spec.method = Method::kBudget;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.curriculum_path = "/nonexistent.json";
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("several seeds write logs with one schema, and reruns are byte-identical") {
  const fs::path dir = scratch("seeds");
  ExperimentSpec spec = tiny_spec(dir, Method::kNone);
  spec.seeds = {1, 2, 3};
  const auto results = run_experiment(spec, Execution::kParallel);
  REQUIRE(results.size() == 3);
  std::set<std::string> header_keys, iteration_keys;
  for (const auto& r : results) {
    CHECK_FALSE(r.aborted);
    CHECK(fs::exists(r.checkpoint_path));
    const auto recs = read_jsonl(r.log_path);
    REQUIRE(recs.size() > 2);
    CHECK(recs.front()["type"] == "header");
    CHECK(recs.front()["schema_version"] == kRunLogSchemaVersion);
    std::int64_t last_step = -1;
    for (const auto& rec : recs) {
      if (rec["type"] != "iteration") continue;
      if (iteration_keys.empty()) iteration_keys = keys_of(rec);
      CHECK(keys_of(rec) == iteration_keys);
      CHECK(rec["step"].get<std::int64_t>() > last_step);
      last_step = rec["step"];
    }
    CHECK(last_step >= 480);
    if (header_keys.empty()) header_keys = keys_of(recs.front());
    CHECK(keys_of(recs.front()) == header_keys);
  }
  const std::string first = read_file(results[0].log_path);
  ExperimentSpec again = spec;
  again.seeds = {1};
  again.output_dir = (dir / "again").string();
  const auto rerun = run_experiment(again, Execution::kSerial);
  CHECK(read_file(rerun[0].log_path) == first);
  CHECK(read_file(rerun[0].checkpoint_path) == read_file(results[0].checkpoint_path));
}

TEST_CASE("setter ablations pin the uncontrolled lesson columns") {
  const fs::path dir = scratch("ablation");
  for (const char* which : {"S", "alpha", "beta"}) {
    ExperimentSpec spec = tiny_spec(dir, Method::kSetter);
    spec.ablation = AblationMask::parse(which);
    spec.total_steps = 2000;
    const auto r = run_experiment(spec, Execution::kParallel).front();
    REQUIRE_FALSE(r.aborted);
    const auto trace = read_jsonl(r.lesson_trace_path);
    REQUIRE(trace.size() >= 10);
    std::set<int> s, a, b;
    for (const auto& rec : trace) {
      s.insert(rec["S"].get<int>());
      a.insert(rec["alpha"].get<int>());
      b.insert(rec["beta"].get<int>());
    }
    CAPTURE(which);
    CHECK((spec.ablation.control_action_space ? s.size() > 1 : s == std::set<int>{12}));
    CHECK((spec.ablation.control_perturbation ? a.size() > 1 : a == std::set<int>{0}));
    CHECK((spec.ablation.control_bunching ? b.size() > 1 : b == std::set<int>{10}));
  }
}

TEST_CASE("DR on and off differ under matched seeds") {
  const fs::path dir = scratch("dr");
  ExperimentSpec on = tiny_spec(dir, Method::kNone);
  on.dr_enabled = true;
  ExperimentSpec off = on;
  off.dr_enabled = false;
  const auto a = run_experiment(on, Execution::kParallel).front();
  const auto b = run_experiment(off, Execution::kParallel).front();
  CHECK(a.run_dir != b.run_dir);
  auto rewards = [](const std::string& log) {
    std::vector<double> out;
    for (const auto& rec : read_jsonl(log))
      if (rec["type"] == "iteration") out.push_back(rec["mean_reward"]);
    return out;
  };
  CHECK(rewards(a.log_path) != rewards(b.log_path));
  CHECK(a.final_eval != b.final_eval);
}

TEST_CASE("budget and stagnancy runs walk the curriculum levels") {
  const fs::path dir = scratch("curricula");
  for (Method m : {Method::kBudget, Method::kStagnancy}) {
    ExperimentSpec spec = tiny_spec(dir, m);
    spec.curriculum_path = BUSRL_CONFIG_DIR "/curricula/easy_first.json";
    spec.total_steps = 2000;
    const auto r = run_experiment(spec, Execution::kParallel).front();
    REQUIRE_FALSE(r.aborted);
    int last = 0;
    for (const auto& rec : read_jsonl(r.log_path)) {
      if (rec["type"] != "iteration") continue;
      const int level = rec["level"];
      CHECK(level >= last);
      last = level;
    }
    if (m == Method::kBudget) CHECK(last == 16);
  }
}

TEST_CASE("a failing run records an abort and keeps the partial log") {
  const fs::path dir = scratch("abort");
  const fs::path bad = dir / "bad_curriculum.json";
  std::ofstream(bad) << R"({"levels": [{"action_mask_levels": [0]}]})";
  ExperimentSpec spec = tiny_spec(dir, Method::kBudget);
  spec.curriculum_path = bad.string();
  const auto r = run_experiment(spec, Execution::kSerial).front();
  CHECK(r.aborted);
  const auto recs = read_jsonl(r.log_path);
  CHECK(recs.front()["type"] == "header");
  CHECK(recs.back()["type"] == "abort");
  CHECK(recs.back()["error"].get<std::string>().find("level 1, column 'perturbation_levels'") != std::string::npos);
}

TEST_CASE("moving average") {
  const auto y = exponential_moving_average({1.0, 2.0, 4.0}, 0.5);
  CHECK(y[0] == 1.0);
  CHECK(y[1] == doctest::Approx(1.5));
  CHECK(y[2] == doctest::Approx(2.75));
  CHECK(exponential_moving_average({}, 0.9).empty());
}

TEST_CASE("aggregation takes mean, min and max across runs") {
  RunLogData a, b;
  a.steps = b.steps = {10, 20, 30};
  a.mean_reward = {1.0, 2.0, 3.0};
  b.mean_reward = {3.0, 0.0};
  const CurveBand band = aggregate_runs({a, b}, 0.0);
  CHECK(band.runs == 2);
  CHECK(band.steps == std::vector<std::int64_t>{10, 20});
  CHECK(band.mean == std::vector<double>{2.0, 1.0});
  CHECK(band.min == std::vector<double>{1.0, 0.0});
  CHECK(band.max == std::vector<double>{3.0, 2.0});
}

TEST_CASE("plots: single curve, seed band, lesson traces, determinism") {
  const fs::path dir = scratch("plots");
  ExperimentSpec none = tiny_spec(dir, Method::kNone);
  none.seeds = {1, 2};
  const auto runs = run_experiment(none, Execution::kParallel);
  ExperimentSpec setter = tiny_spec(dir, Method::kSetter);
  const auto srun = run_experiment(setter, Execution::kParallel).front();

  const auto single = render_plots({runs[0].log_path}, (dir / "single").string(), 0.9);
  const std::string svg1 = read_file(dir / "single" / "reward_curves.svg");
  CHECK(svg1.find("<polyline") != std::string::npos);
  CHECK(svg1.find("<polygon") == std::string::npos);
  CHECK_FALSE(fs::exists(dir / "single" / "lesson_S.svg"));

  render_plots({runs[0].log_path, runs[1].log_path, srun.log_path}, (dir / "multi").string(), 0.9);
  const std::string svg2 = read_file(dir / "multi" / "reward_curves.svg");
  CHECK(svg2.find("<polygon") != std::string::npos);
  for (const char* f : {"lesson_S.svg", "lesson_alpha.svg", "lesson_beta.svg", "summary.csv"})
    CHECK(fs::exists(dir / "multi" / f));
  const std::string csv = read_file(dir / "multi" / "summary.csv");
  CHECK(csv.find("none-dr,2,") != std::string::npos);

  render_plots({runs[0].log_path, runs[1].log_path, srun.log_path}, (dir / "multi2").string(), 0.9);
  for (const char* f : {"reward_curves.svg", "lesson_S.svg", "summary.csv"})
    CHECK(read_file(dir / "multi" / f) == read_file(dir / "multi2" / f));
}

TEST_CASE("plots reject logs with missing columns") {
  const fs::path dir = scratch("schema");
  const fs::path log = dir / "run.jsonl";
  std::ofstream(log) << R"({"type":"header","schema_version":1,"label":"x","method":"none","seed":1})" << '\n'
                     << R"({"type":"iteration","step":5})" << '\n';
  try {
    read_run_log(log.string());
    FAIL("expected a schema error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("mean_reward") != std::string::npos);
  }
  const fs::path headerless = dir / "h.jsonl";
  std::ofstream(headerless) << R"({"type":"iteration","step":5,"mean_reward":1})" << '\n';
  CHECK_THROWS_AS(read_run_log(headerless.string()), ConfigError);
}
