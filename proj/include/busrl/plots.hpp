#ifndef BUSRL_PLOTS_HPP_
#define BUSRL_PLOTS_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace busrl {

// The columns of a run log the plots need.
struct RunLogData {
  std::string path;
  std::string label;
  std::string method;
  std::uint64_t seed = 0;
  std::vector<std::int64_t> steps;
  std::vector<double> mean_reward;
  // Lesson columns; empty optionals where the method has no such component.
  std::vector<std::optional<int>> action_space;
  std::vector<std::optional<int>> perturbation;
  std::vector<std::optional<int>> bunching;

  bool has_lesson_trace() const;
};

// Throws ConfigError naming the file and column on schema problems.
RunLogData read_run_log(const std::string& path);

// y_0 = x_0, y_t = c * y_{t-1} + (1 - c) * x_t.
std::vector<double> exponential_moving_average(const std::vector<double>& x, double coefficient);

struct CurveBand {
  std::vector<std::int64_t> steps;
  std::vector<double> mean;
  std::vector<double> min;
  std::vector<double> max;
  int runs = 0;
};

// Smooths every run, truncates to the shortest, and takes the per-iteration
// mean / min / max across runs. Steps come from the first run.
CurveBand aggregate_runs(const std::vector<RunLogData>& runs, double smoothing);

// Writes reward_curves.svg, summary.csv and, for runs with lesson traces,
// lesson_S.svg / lesson_alpha.svg / lesson_beta.svg. Returns written paths.
std::vector<std::string> render_plots(const std::vector<std::string>& log_paths,
                                      const std::string& output_dir, double smoothing);

}  // namespace busrl

#endif  // BUSRL_PLOTS_HPP_
