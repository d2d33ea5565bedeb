#ifndef BUSRL_SETTER_HPP_
#define BUSRL_SETTER_HPP_

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "busrl/agent.hpp"
#include "busrl/lessons.hpp"
#include "busrl/mlp.hpp"
#include "busrl/rng.hpp"

namespace busrl {

inline constexpr int kSetterHistory = 3;
inline constexpr int kSetterInputs = kSetterHistory * 3 + kSetterHistory;
inline constexpr std::array<int, 3> kSetterHeadSizes{kNumActionSpaces, kMaxPerturbation + 1,
                                                    kMaxBunching - kMinBunching + 1};

// Which lesson components the setter controls; the others stay pinned.
struct AblationMask {
  bool control_action_space = true;
  bool control_perturbation = true;
  bool control_bunching = true;

  void validate() const;
  bool controls(int head) const;
  // "all", "S", "alpha", "beta", or '+'-joined combinations such as "S+alpha".
  static AblationMask parse(const std::string& text);
  std::string to_string() const;
  friend bool operator==(const AblationMask&, const AblationMask&) = default;
};

// Values used for components the ablation leaves uncontrolled.
inline constexpr Lesson kPinnedLesson{12, 0, 10};

struct SetterConfig {
  std::vector<int> hidden{32, 32};
  double step_size = 1e-3;
  bool mean_log_probs = false;  // sum of head log-probs by default

  void validate() const;
};

// Ring buffer of the last three (lesson, reward) pairs. Rewards are stored
// already normalized.
class LessonHistory {
 public:
  void push(const Lesson& lesson, double normalized_reward);
  bool full() const { return count_ >= kSetterHistory; }
  int size() const { return std::min(count_, kSetterHistory); }

  // 12 inputs: (S/14, alpha/4, (beta-1)/9) for each slot, oldest first, then
  // the three rewards. Empty slots read as zeros.
  std::array<double, kSetterInputs> encode() const;
  double mean_reward() const;

  friend bool operator==(const LessonHistory&, const LessonHistory&) = default;

 private:
  std::array<Lesson, kSetterHistory> lessons_{};
  std::array<double, kSetterHistory> rewards_{};
  int count_ = 0;
};

struct SetterDistribution {
  std::array<std::vector<double>, 3> probs;
  std::array<std::vector<double>, 3> log_probs;

  Lesson mode() const;
  // Probability of `lesson` under the controlled heads only.
  double probability(const Lesson& lesson, const AblationMask& ablation) const;
};

SetterDistribution setter_distribution(const MlpParams& params,
                                       const std::array<double, kSetterInputs>& input,
                                       MlpCache* cache = nullptr);

struct SetterProposal {
  Lesson lesson;
  std::array<int, 3> head_choice{};       // sampled index per head
  std::array<double, 3> log_probs{};      // per-head log-prob of the choice
  std::array<double, kSetterInputs> input{};
  bool from_prior = false;
};

MlpParams make_setter_params(const SetterConfig& cfg, Rng& rng);

// Samples S, alpha, beta from the three softmax heads; uncontrolled components
// are replaced by the pinned defaults.
SetterProposal propose_lesson(const MlpParams& params, const LessonHistory& history,
                              const AblationMask& ablation, Rng& rng);

// Uniform-prior proposal used while the history is filling.
SetterProposal propose_from_prior(const LessonHistory& history, const AblationMask& ablation, Rng& rng);

// L = -r_bar * (sum of controlled head log-probs), or the mean with
// `mean_log_probs`. Adds dL/dparams into `grad` when non-null.
double setter_loss(const MlpParams& params, const SetterProposal& proposal,
                   const AblationMask& ablation, double mean_reward, bool mean_log_probs,
                   MlpParams* grad);

// One optimizer step on the setter loss.
double setter_update(MlpParams& params, Adam& optimizer, const SetterProposal& proposal,
                     const AblationMask& ablation, double mean_reward, bool mean_log_probs);

class Setter {
 public:
  Setter(const SetterConfig& cfg, const AblationMask& ablation, Rng& init_rng);

  SetterProposal propose(Rng& rng) const;
  // Records the lesson-level reward, then takes one step on the loss with r_bar
  // = mean of the last three normalized rewards. Returns the loss.
  double observe(const SetterProposal& proposal, double reward);

  const MlpParams& params() const { return params_; }
  MlpParams& mutable_params() { return params_; }
  const LessonHistory& history() const { return history_; }
  const AblationMask& ablation() const { return ablation_; }
  double last_mean_reward() const { return last_mean_reward_; }

 private:
  SetterConfig cfg_;
  AblationMask ablation_;
  MlpParams params_;
  Adam optimizer_;
  LessonHistory history_;
  RunningStat reward_stat_;
  double last_mean_reward_ = 0.0;
};

struct LessonTraceRecord {
  int iteration = 0;
  std::int64_t step = 0;
  Lesson lesson;
  double mean_reward = 0.0;
  double setter_loss = 0.0;
  bool warmup = false;
};

// Trains on `lesson` for one trajectory (rollout + agent update) and reports
// the lesson-level reward and the number of decision steps consumed.
struct LessonOutcome {
  double mean_reward = 0.0;
  std::int64_t steps = 0;
};
using LessonRunner = std::function<LessonOutcome(const Lesson& lesson, int iteration)>;

// Setter-driven curriculum loop: propose, train the agent on the lesson,
// update the setter with the resulting reward.
std::vector<LessonTraceRecord> run_curriculum_training(
    Setter& setter, const LessonRunner& runner, int iterations, Rng& rng,
    const std::function<void(const LessonTraceRecord&)>& on_record = {});

}  // namespace busrl

#endif  // BUSRL_SETTER_HPP_
