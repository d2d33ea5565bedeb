#ifndef BUSRL_AGENT_HPP_
#define BUSRL_AGENT_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "busrl/domain_randomization.hpp"
#include "busrl/environment.hpp"
#include "busrl/lessons.hpp"
#include "busrl/mlp.hpp"
#include "busrl/rng.hpp"

namespace busrl {

// Serial reference path or the OpenMP path; both produce identical results.
enum class Execution { kSerial, kParallel };

// Separate actor (logits over the 14 actions) and critic networks.
struct PolicyNets {
  MlpParams actor;
  MlpParams critic;

  static PolicyNets random(int observation_size, const std::vector<int>& hidden, Rng& rng);
  PolicyNets zeros_like() const { return {actor.zeros_like(), critic.zeros_like()}; }
  std::size_t num_params() const { return actor.data.size() + critic.data.size(); }
  friend bool operator==(const PolicyNets&, const PolicyNets&) = default;
};

struct PolicyOutput {
  std::array<double, kNumActions> logits{};
  std::array<double, kNumActions> probs{};      // exactly 0 for masked actions
  std::array<double, kNumActions> log_probs{};  // -inf for masked actions
  ActionMask mask;
  double value = 0.0;

  double entropy() const;
};

// Masked categorical over the actor logits plus the critic's value. Throws
// ContractError on a non-finite observation.
PolicyOutput policy_forward(const PolicyNets& nets, std::span<const double> observation,
                            const ActionMask& mask, MlpCache* actor_cache = nullptr,
                            MlpCache* critic_cache = nullptr);

int sample_action(const PolicyOutput& out, Rng& rng);
int greedy_action(const PolicyOutput& out);

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  int epochs = 4;
  int minibatch = 64;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double learning_rate = 3e-4;
  double max_grad_norm = 0.5;
  bool normalize_advantages = true;
  bool scale_rewards = true;
  int horizon = 2048;  // decisions per rollout, summed over env instances
  int num_envs = 8;
  std::vector<int> hidden{64, 64};

  void validate() const;
};

// Trajectory storage. Transitions are grouped into contiguous segments, one
// per environment instance, each with its own bootstrap value.
struct RolloutBuffer {
  struct Segment {
    std::size_t begin = 0;
    std::size_t end = 0;
    double bootstrap_value = 0.0;
  };

  int observation_size = 0;
  std::vector<double> observations;  // size() x observation_size
  std::vector<ActionMask> masks;
  std::vector<int> actions;
  std::vector<double> log_probs;
  std::vector<double> raw_rewards;
  std::vector<double> rewards;  // possibly scaled; what GAE sees
  std::vector<double> values;
  std::vector<std::uint8_t> dones;
  std::vector<double> advantages;
  std::vector<double> returns;
  std::vector<Segment> segments;
  std::vector<double> episode_returns;  // raw returns of episodes finished in this rollout

  std::size_t size() const { return actions.size(); }
  std::span<const double> observation(std::size_t i) const {
    return {observations.data() + i * static_cast<std::size_t>(observation_size),
            static_cast<std::size_t>(observation_size)};
  }
  bool consistent() const;
  double mean_raw_reward() const;
  void append(const RolloutBuffer& other);
};

// Generalized advantage estimation over each segment; fills advantages and
// returns.
void compute_gae(RolloutBuffer& buffer, double gamma, double lambda);

struct RunningStat {
  double mean = 0.0;
  double m2 = 0.0;
  std::int64_t count = 0;

  void push(double x);
  double variance() const { return count > 1 ? m2 / static_cast<double>(count) : 0.0; }
  double stddev() const;
};

// Runs PPO rollouts on a fixed pool of environment instances. Episodes carry
// over between calls until the lesson changes.
class RolloutCollector {
 public:
  RolloutCollector(EnvConfig env, DRConfig dr, int num_envs, std::uint64_t seed,
                   double gamma = 0.99, bool scale_rewards = false);

  void set_lesson(const EnvLesson& lesson);
  const EnvLesson& lesson() const { return lesson_; }

  RolloutBuffer collect(const PolicyNets& nets, int horizon, Execution exec);

  int observation_size() const;
  int num_envs() const { return static_cast<int>(instances_.size()); }
  std::int64_t total_decisions() const { return total_decisions_; }

 private:
  struct Instance {
    BusEnv env;
    Rng action_rng;
    std::optional<DecisionEvent> pending;
    std::uint64_t seed = 0;
    std::int64_t episode = 0;
    double episode_return = 0.0;
    double discounted_return = 0.0;
  };

  void collect_instance(Instance& inst, const PolicyNets& nets, int steps, RolloutBuffer& out);
  void begin_episode(Instance& inst);

  EnvConfig env_config_;
  DRConfig dr_config_;
  EnvLesson lesson_;
  std::vector<Instance> instances_;
  double gamma_;
  bool scale_rewards_;
  RunningStat return_stat_;
  std::int64_t total_decisions_ = 0;
};

// Single-instance convenience wrapper.
RolloutBuffer collect_rollout(const EnvConfig& env, const PolicyNets& nets, const EnvLesson& lesson,
                              const DRConfig& dr, int horizon, std::uint64_t seed);

struct PpoLoss {
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double total = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

// Loss of one transition given its (already normalized) advantage; adds the
// gradient, scaled by `weight`, into `grad` when non-null.
PpoLoss ppo_sample_loss(const PolicyNets& nets, const RolloutBuffer& buffer, std::size_t index,
                        double advantage, const PpoConfig& cfg, PolicyNets* grad,
                        double weight = 1.0);

// Mean loss and gradient over `indices`. The parallel path evaluates
// per-sample gradients concurrently and reduces them in index order.
PpoLoss ppo_minibatch_gradient(const PolicyNets& nets, const RolloutBuffer& buffer,
                               std::span<const std::size_t> indices,
                               std::span<const double> advantages, const PpoConfig& cfg,
                               PolicyNets& grad, Execution exec);

class PpoOptimizer {
 public:
  PpoOptimizer(const PolicyNets& nets, const PpoConfig& cfg);

  // K epochs of shuffled minibatch updates. `buffer` must have advantages.
  PpoLoss update(PolicyNets& nets, const RolloutBuffer& buffer, Rng& rng, Execution exec);

  const PpoConfig& config() const { return cfg_; }

 private:
  PpoConfig cfg_;
  Adam actor_opt_;
  Adam critic_opt_;
};

// Mean-reward evaluation over independent seeded episodes.
std::vector<double> evaluate_policy(const EnvConfig& env, const DRConfig& dr, const PolicyNets& nets,
                                    const EnvLesson& lesson, int episodes, std::uint64_t seed,
                                    bool greedy, Execution exec);

}  // namespace busrl

#endif  // BUSRL_AGENT_HPP_
