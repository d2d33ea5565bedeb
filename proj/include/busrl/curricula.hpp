#ifndef BUSRL_CURRICULA_HPP_
#define BUSRL_CURRICULA_HPP_

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "busrl/lessons.hpp"

namespace busrl {

// One row of a difficulty table. `action_mask_levels` lists discrete action
// ids; the legal set is their union.
struct DifficultyLevel {
  std::vector<int> action_mask_levels;
  int perturbation = 0;
  int bunching = 10;
  double threshold = 0.01;
  std::int64_t budget = 0;  // decision steps; 0 = share the remaining horizon

  ActionMask actions() const;
  EnvLesson env_lesson() const;
  friend bool operator==(const DifficultyLevel&, const DifficultyLevel&) = default;
};

enum class CurriculumMode { kBudget, kStagnancy };

struct CurriculumConfig {
  std::string name;
  CurriculumMode mode = CurriculumMode::kBudget;
  std::vector<DifficultyLevel> levels;
  int stagnation_window = 10;

  void validate() const;
  friend bool operator==(const CurriculumConfig&, const CurriculumConfig&) = default;
};

// JSON curriculum file. Errors name the offending level and column.
CurriculumConfig parse_curriculum(const std::string& text, const std::string& source = "<string>");
CurriculumConfig load_curriculum(const std::string& path);

// Tab-separated table, one row per level, columns in file-key order.
std::string curriculum_table(const CurriculumConfig& config);

// Gives every level without an explicit budget an equal share of `horizon`.
void fill_equal_budgets(CurriculumConfig& config, std::int64_t horizon);

// Level index (0-based) active at global step t: level m covers
// [t_m, t_m + budget_m). Steps past the total budget clamp to the last level.
int budget_level_index(const CurriculumConfig& config, std::int64_t t);
const DifficultyLevel& budget_lesson(const CurriculumConfig& config, std::int64_t t);

// Advances one level when the largest rise over the window, max(w_i) - w_0,
// is below threshold * |mean(w)|. Needs a full window; clamps at the last level.
int stagnancy_step(const CurriculumConfig& config, std::span<const double> window, int level);

// Stateful wrapper: feeds lesson-level rewards, restarts the window after each
// advance.
class StagnancyScheduler {
 public:
  explicit StagnancyScheduler(const CurriculumConfig& config);

  int push(double reward);
  int level() const { return level_; }
  const DifficultyLevel& current() const;

 private:
  CurriculumConfig config_;
  std::deque<double> window_;
  int level_ = 0;
};

}  // namespace busrl

#endif  // BUSRL_CURRICULA_HPP_
