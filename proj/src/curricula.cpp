#include "busrl/curricula.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "busrl/errors.hpp"
#include "json.hpp"

namespace busrl {

namespace {

using nlohmann::json;

std::string where(const std::string& source, std::size_t row, const char* column) {
  return source + ": level " + std::to_string(row + 1) + ", column '" + column + "'";
}

std::string format_threshold(double x) {
  std::ostringstream out;
  out << x;
  return out.str();
}

}  // namespace

ActionMask DifficultyLevel::actions() const {
  ActionMask mask;
  for (int a : action_mask_levels) mask.set(static_cast<std::size_t>(a));
  return mask;
}

EnvLesson DifficultyLevel::env_lesson() const {
  EnvLesson lesson;
  lesson.actions = actions();
  lesson.perturbation = perturbation;
  lesson.bunching = bunching;
  return lesson;
}

void CurriculumConfig::validate() const {
  if (levels.empty()) throw ConfigError("curriculum '" + name + "' has no levels");
  if (stagnation_window < 1) throw ConfigError("curriculum stagnation_window must be >= 1");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const DifficultyLevel& l = levels[i];
    if (l.action_mask_levels.empty()) throw ConfigError(where(name, i, "action_mask_levels") + ": empty");
    for (int a : l.action_mask_levels)
      if (a < 0 || a >= kNumActions)
        throw ConfigError(where(name, i, "action_mask_levels") + ": action " + std::to_string(a) +
                          " outside [0,13]");
    if (l.perturbation < 0 || l.perturbation > kMaxPerturbation)
      throw ConfigError(where(name, i, "perturbation_levels") + ": outside [0,4]");
    if (l.bunching < kMinBunching || l.bunching > kMaxBunching)
      throw ConfigError(where(name, i, "bunching_levels") + ": outside [1,10]");
    if (!(l.threshold > 0.0 && l.threshold <= 1.0))
      throw ConfigError(where(name, i, "difficulty_thresholds") + ": outside (0,1]");
    if (l.budget < 0) throw ConfigError(where(name, i, "budget") + ": negative");
  }
}

CurriculumConfig parse_curriculum(const std::string& text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("levels") || !doc["levels"].is_array())
    throw ConfigError(source + ": expected an object with a 'levels' array");

  CurriculumConfig cfg;
  cfg.name = doc.value("name", source);
  const std::string mode = doc.value("mode", std::string("budget"));
  if (mode == "budget")
    cfg.mode = CurriculumMode::kBudget;
  else if (mode == "stagnancy")
    cfg.mode = CurriculumMode::kStagnancy;
  else
    throw ConfigError(source + ": unknown mode '" + mode + "'");
  cfg.stagnation_window = doc.value("stagnation_window", 10);

  const json& rows = doc["levels"];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const json& row = rows[i];
    if (!row.is_object()) throw ConfigError(source + ": level " + std::to_string(i + 1) + " is not an object");
    auto field = [&](const char* column) -> const json& {
      if (!row.contains(column)) throw ConfigError(where(source, i, column) + ": missing");
      return row[column];
    };
    DifficultyLevel level;
    try {
      const json& masks = field("action_mask_levels");
      if (!masks.is_array()) throw ConfigError(where(source, i, "action_mask_levels") + ": expected a list");
      for (const json& a : masks) {
        if (!a.is_number_integer()) throw ConfigError(where(source, i, "action_mask_levels") + ": non-integer entry");
        level.action_mask_levels.push_back(a.get<int>());
      }
      const json& alpha = field("perturbation_levels");
      if (!alpha.is_number_integer()) throw ConfigError(where(source, i, "perturbation_levels") + ": expected an integer");
      level.perturbation = alpha.get<int>();
      const json& beta = field("bunching_levels");
      if (!beta.is_number_integer()) throw ConfigError(where(source, i, "bunching_levels") + ": expected an integer");
      level.bunching = beta.get<int>();
      const json& thr = field("difficulty_thresholds");
      if (!thr.is_number()) throw ConfigError(where(source, i, "difficulty_thresholds") + ": expected a number");
      level.threshold = thr.get<double>();
      if (row.contains("budget")) {
        if (!row["budget"].is_number_integer()) throw ConfigError(where(source, i, "budget") + ": expected an integer");
        level.budget = row["budget"].get<std::int64_t>();
      }
    } catch (const json::exception& e) {
      throw ConfigError(source + ": level " + std::to_string(i + 1) + ": " + e.what());
    }
    cfg.levels.push_back(std::move(level));
  }
  CurriculumConfig named = cfg;
  named.name = source;
  named.validate();
  return cfg;
}

CurriculumConfig load_curriculum(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open curriculum file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_curriculum(buf.str(), path);
}

std::string curriculum_table(const CurriculumConfig& config) {
  std::ostringstream out;
  out << "level\taction_mask_levels\tperturbation_levels\tbunching_levels\tdifficulty_thresholds\n";
  for (std::size_t i = 0; i < config.levels.size(); ++i) {
    const DifficultyLevel& l = config.levels[i];
    out << i + 1 << '\t';
    for (std::size_t k = 0; k < l.action_mask_levels.size(); ++k)
      out << (k ? "," : "") << l.action_mask_levels[k];
    out << '\t' << l.perturbation << '\t' << l.bunching << '\t' << format_threshold(l.threshold) << '\n';
  }
  return out.str();
}

void fill_equal_budgets(CurriculumConfig& config, std::int64_t horizon) {
  std::int64_t fixed = 0;
  std::int64_t open = 0;
  for (const auto& l : config.levels) {
    fixed += l.budget;
    if (l.budget == 0) ++open;
  }
  if (open == 0) return;
  const std::int64_t share = std::max<std::int64_t>(1, (horizon - fixed) / open);
  for (auto& l : config.levels)
    if (l.budget == 0) l.budget = share;
}

int budget_level_index(const CurriculumConfig& config, std::int64_t t) {
  if (config.levels.empty()) throw ContractError("empty curriculum");
  std::int64_t start = 0;
  for (std::size_t m = 0; m < config.levels.size(); ++m) {
    const std::int64_t budget = config.levels[m].budget;
    if (budget <= 0) throw ContractError("budget curriculum level " + std::to_string(m + 1) + " has no budget");
    if (t < start + budget) return static_cast<int>(m);
    start += budget;
  }
  return static_cast<int>(config.levels.size()) - 1;
}

const DifficultyLevel& budget_lesson(const CurriculumConfig& config, std::int64_t t) {
  return config.levels[static_cast<std::size_t>(budget_level_index(config, t))];
}

int stagnancy_step(const CurriculumConfig& config, std::span<const double> window, int level) {
  const int last = static_cast<int>(config.levels.size()) - 1;
  if (level >= last) return last;
  if (static_cast<int>(window.size()) < config.stagnation_window) return level;
  const double first = window.front();
  double rise = 0.0;
  for (double w : window) rise = std::max(rise, w - first);
  const double mean = std::accumulate(window.begin(), window.end(), 0.0) / static_cast<double>(window.size());
  const double threshold = config.levels[static_cast<std::size_t>(level)].threshold;
  return rise < threshold * std::abs(mean) ? level + 1 : level;
}

StagnancyScheduler::StagnancyScheduler(const CurriculumConfig& config) : config_(config) {
  config.validate();
}

int StagnancyScheduler::push(double reward) {
  window_.push_back(reward);
  while (static_cast<int>(window_.size()) > config_.stagnation_window) window_.pop_front();
  const std::vector<double> w(window_.begin(), window_.end());
  const int next = stagnancy_step(config_, w, level_);
  if (next != level_) {
    level_ = next;
    window_.clear();
  }
  return level_;
}

const DifficultyLevel& StagnancyScheduler::current() const {
  return config_.levels[static_cast<std::size_t>(level_)];
}

}  // namespace busrl
