#ifndef BUSRL_HARNESS_HPP_
#define BUSRL_HARNESS_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "busrl/agent.hpp"
#include "busrl/config.hpp"
#include "busrl/setter.hpp"

namespace busrl {

inline constexpr int kRunLogSchemaVersion = 1;

enum class Method { kNone, kBudget, kStagnancy, kSetter };

std::string to_string(Method method);
Method method_from_string(const std::string& name);

struct ExperimentSpec {
  Method method = Method::kNone;
  std::string config_path;      // empty = built-in defaults
  std::string curriculum_path;  // budget / stagnancy only
  AblationMask ablation;        // setter only
  std::optional<bool> dr_enabled;
  std::vector<std::uint64_t> seeds{1};
  std::optional<std::int64_t> total_steps;
  std::string output_dir = "runs";
  std::string label;  // defaults to a description of method / ablation / dr

  void validate() const;
  std::string resolved_label(const AppConfig& config) const;
  // Canonical JSON of every field that influences results.
  std::string canonical(const AppConfig& config) const;
};

struct RunResult {
  std::uint64_t seed = 0;
  std::string run_dir;
  std::string log_path;
  std::string lesson_trace_path;  // setter runs only
  std::string checkpoint_path;
  std::int64_t steps = 0;
  int iterations = 0;
  double initial_eval = 0.0;
  double final_eval = 0.0;
  bool aborted = false;
  std::string error;
};

// Runs one seed end to end; writes run.jsonl, lessons.jsonl (setter),
// checkpoint.txt and timing.jsonl under <output_dir>/<label>/seed<k>/.
// Sub-module failures are logged as an "abort" record and reported in the
// result instead of thrown.
RunResult run_single(const ExperimentSpec& spec, const AppConfig& config, std::uint64_t seed,
                     Execution exec);

std::vector<RunResult> run_experiment(const ExperimentSpec& spec, Execution exec);

// Reads a config file, or returns the defaults for an empty path.
AppConfig config_for(const ExperimentSpec& spec);

}  // namespace busrl

#endif  // BUSRL_HARNESS_HPP_
