#include <fstream>
#include <sstream>

#include "busrl/curricula.hpp"
#include "busrl/errors.hpp"
#include "doctest.h"

using namespace busrl;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE_MESSAGE(in.good(), "missing " << path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

CurriculumConfig load(const char* name) {
  return load_curriculum(std::string(BUSRL_CONFIG_DIR "/curricula/") + name + ".json");
}

CurriculumConfig flat(int levels, double threshold, int window) {
  CurriculumConfig c;
  c.name = "synthetic";
  c.mode = CurriculumMode::kStagnancy;
  c.stagnation_window = window;
  for (int i = 0; i < levels; ++i) c.levels.push_back(DifficultyLevel{{0}, 0, 10, threshold, 0});
  return c;
}

}  // namespace

TEST_CASE("shipped curricula match the transcribed tables byte for byte") {
  for (const char* name : {"easy_first", "hard_first", "combination"}) {
    CAPTURE(name);
    CHECK(curriculum_table(load(name)) == read_file(std::string(BUSRL_GOLDEN_DIR "/") + name + ".tsv"));
  }
  CHECK(load("easy_first").levels.size() == 16);
  CHECK(load("hard_first").levels.size() == 16);
  CHECK(load("combination").levels.size() == 12);
}

TEST_CASE("spot rows") {
  const auto easy = load("easy_first").levels[2];
  CHECK(easy.action_mask_levels == std::vector<int>{0, 1, 2});
  CHECK(easy.perturbation == 0);
  CHECK(easy.bunching == 9);
  CHECK(easy.threshold == 0.08);
  const auto hard = load("hard_first").levels[0];
  CHECK(hard.action_mask_levels == std::vector<int>{0});
  CHECK(hard.perturbation == 4);
  CHECK(hard.bunching == 3);
  CHECK(hard.threshold == 0.01);
  const auto combo = load("combination").levels[8];
  CHECK(combo.action_mask_levels == std::vector<int>{12, 13});
  CHECK(combo.perturbation == 2);
  CHECK(combo.bunching == 1);
  CHECK(combo.threshold == 0.07);
}

TEST_CASE("a level's legal set is the union of its action ids") {
  const DifficultyLevel l{{12, 13}, 2, 1, 0.07, 0};
  ActionMask expected;
  expected.set(12).set(13);
  CHECK(l.actions() == expected);
  CHECK(l.env_lesson().bunching == 1);
  CHECK(l.env_lesson().perturbation == 2);
}

TEST_CASE("malformed rows name the level and column") {
  auto error_of = [](const std::string& text) {
    try {
      parse_curriculum(text, "bad.json");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  const std::string ok_row = R"({"action_mask_levels":[0],"perturbation_levels":0,"bunching_levels":10,"difficulty_thresholds":0.01})";
  CHECK(error_of(R"({"levels":[)" + ok_row + R"(,{"action_mask_levels":[0],"perturbation_levels":9,"bunching_levels":10,"difficulty_thresholds":0.01}]})")
            .find("level 2, column 'perturbation_levels'") != std::string::npos);
  CHECK(error_of(R"({"levels":[{"action_mask_levels":[0],"perturbation_levels":0,"difficulty_thresholds":0.01}]})")
            .find("level 1, column 'bunching_levels'") != std::string::npos);
  CHECK(error_of(R"({"levels":[{"action_mask_levels":[0, 20],"perturbation_levels":0,"bunching_levels":3,"difficulty_thresholds":0.01}]})")
            .find("column 'action_mask_levels'") != std::string::npos);
  CHECK(error_of(R"({"levels":[{"action_mask_levels":[0],"perturbation_levels":0,"bunching_levels":3,"difficulty_thresholds":"x"}]})")
            .find("column 'difficulty_thresholds'") != std::string::npos);
  CHECK(error_of(R"({"levels":[]})").find("no levels") != std::string::npos);
  CHECK_FALSE(error_of("{ not json").empty());
}

TEST_CASE("budget schedule is piecewise constant") {
  CurriculumConfig c = load("easy_first");
  fill_equal_budgets(c, 160000);
  for (const auto& l : c.levels) CHECK(l.budget == 10000);
  CHECK(budget_level_index(c, 0) == 0);
  for (std::int64_t t = 0; t < 160000; t += 777) CHECK(budget_level_index(c, t) == t / 10000);
  CHECK(budget_level_index(c, 9999) == 0);
  CHECK(budget_level_index(c, 10000) == 1);  // left boundary is inclusive
  CHECK(budget_level_index(c, 159999) == 15);
  CHECK(budget_level_index(c, 10000000) == 15);
  CHECK(&budget_lesson(c, 25000) == &c.levels[2]);
}

TEST_CASE("explicit budgets give the cumulative boundaries") {
  CurriculumConfig c = flat(3, 0.01, 10);
  c.levels[0].budget = 5;
  c.levels[1].budget = 20;
  c.levels[2].budget = 1;
  const std::vector<int> expected{0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 2, 2};
  for (std::size_t t = 0; t < expected.size(); ++t) CHECK(budget_level_index(c, static_cast<std::int64_t>(t)) == expected[t]);
}

TEST_CASE("constant rewards advance once per full window") {
  const CurriculumConfig c = flat(5, 0.05, 10);
  StagnancyScheduler s(c);
  std::vector<int> levels;
  for (int i = 0; i < 45; ++i) levels.push_back(s.push(-5.0));
  for (int i = 0; i < 45; ++i) CHECK(levels[static_cast<std::size_t>(i)] == std::min(4, (i + 1) / 10));
}

TEST_CASE("steadily improving rewards never advance") {
  const CurriculumConfig c = flat(5, 0.05, 10);
  StagnancyScheduler s(c);
  for (int i = 0; i < 200; ++i) CHECK(s.push(-100.0 + i) == 0);
}

TEST_CASE("stagnancy clamps at the final level") {
  const CurriculumConfig c = flat(2, 0.05, 3);
  StagnancyScheduler s(c);
  for (int i = 0; i < 30; ++i) s.push(-1.0);
  CHECK(s.level() == 1);
  const std::vector<double> window{-1.0, -1.0, -1.0};
  CHECK(stagnancy_step(c, window, 1) == 1);
}

TEST_CASE("stagnancy rule on a hand-built window") {
  const CurriculumConfig c = flat(3, 0.1, 4);
  // mean -10, allowed rise 1.0.
  const std::vector<double> stalled{-10.4, -9.8, -10.0, -9.8};
  const std::vector<double> rising{-11.0, -10.0, -9.5, -9.5};
  const std::vector<double> partial{-10.0, -10.0};
  CHECK(stagnancy_step(c, stalled, 0) == 1);
  CHECK(stagnancy_step(c, rising, 0) == 0);
  CHECK(stagnancy_step(c, partial, 0) == 0);
}

TEST_CASE("a hand-traced mixed reward sequence") {
  // Window 3, threshold 0.1: stall, improve, stall again.
  const CurriculumConfig c = flat(4, 0.1, 3);
  StagnancyScheduler s(c);
  const std::vector<double> trace{-10, -10, -10, -10, -8, -6, -6, -6, -6, -6, -6};
  const std::vector<int> expected{0, 0, 1, 1, 1, 1, 1, 2, 2, 2, 3};
  for (std::size_t i = 0; i < trace.size(); ++i) CHECK(s.push(trace[i]) == expected[i]);
}
