#include "busrl/agent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "busrl/errors.hpp"
#include "busrl/parallel.hpp"

namespace busrl {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Tag mixed into episode seeds for the domain-randomization draw.
constexpr std::uint64_t kDrStreamTag = 0xd1b54a32d192ed03ULL;

std::vector<int> with_io(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

DRDraw draw_for_episode(const DRConfig& dr, std::uint64_t episode_seed) {
  Rng rng(derive_seed(episode_seed, kDrStreamTag));
  return draw_episode(dr, rng);
}

}  // namespace

PolicyNets PolicyNets::random(int observation_size, const std::vector<int>& hidden, Rng& rng) {
  PolicyNets nets;
  nets.actor = MlpParams::random(with_io(observation_size, hidden, kNumActions), Activation::kTanh,
                                 rng, 0.01);
  nets.critic = MlpParams::random(with_io(observation_size, hidden, 1), Activation::kTanh, rng, 1.0);
  return nets;
}

double PolicyOutput::entropy() const {
  double h = 0.0;
  for (int a = 0; a < kNumActions; ++a)
    if (probs[static_cast<std::size_t>(a)] > 0.0)
      h -= probs[static_cast<std::size_t>(a)] * log_probs[static_cast<std::size_t>(a)];
  return h;
}

PolicyOutput policy_forward(const PolicyNets& nets, std::span<const double> observation,
                            const ActionMask& mask, MlpCache* actor_cache, MlpCache* critic_cache) {
  for (double x : observation)
    if (!std::isfinite(x)) throw ContractError("non-finite observation entry");
  if (mask.none()) throw ContractError("action mask has no legal action");

  PolicyOutput out;
  out.mask = mask;
  const std::vector<double> logits = mlp_forward(nets.actor, observation, actor_cache);
  double max_logit = kNegInf;
  for (int a = 0; a < kNumActions; ++a) {
    const auto ua = static_cast<std::size_t>(a);
    out.logits[ua] = mask.test(ua) ? logits[ua] : kNegInf;
    max_logit = std::max(max_logit, out.logits[ua]);
  }
  if (!std::isfinite(max_logit)) throw NumericError("non-finite policy logits");
  double z = 0.0;
  for (int a = 0; a < kNumActions; ++a) {
    const auto ua = static_cast<std::size_t>(a);
    if (mask.test(ua)) z += std::exp(out.logits[ua] - max_logit);
  }
  const double log_z = max_logit + std::log(z);
  for (int a = 0; a < kNumActions; ++a) {
    const auto ua = static_cast<std::size_t>(a);
    if (mask.test(ua)) {
      out.log_probs[ua] = out.logits[ua] - log_z;
      out.probs[ua] = std::exp(out.log_probs[ua]);
    } else {
      out.log_probs[ua] = kNegInf;
      out.probs[ua] = 0.0;
    }
  }
  out.value = mlp_forward(nets.critic, observation, critic_cache)[0];
  return out;
}

int sample_action(const PolicyOutput& out, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  int last_legal = 0;
  for (int a = 0; a < kNumActions; ++a) {
    const auto ua = static_cast<std::size_t>(a);
    if (!out.mask.test(ua)) continue;
    last_legal = a;
    acc += out.probs[ua];
    if (u < acc) return a;
  }
  return last_legal;
}

int greedy_action(const PolicyOutput& out) {
  int best = -1;
  for (int a = 0; a < kNumActions; ++a) {
    const auto ua = static_cast<std::size_t>(a);
    if (out.mask.test(ua) && (best < 0 || out.probs[ua] > out.probs[static_cast<std::size_t>(best)]))
      best = a;
  }
  return best;
}

void PpoConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("ppo.gamma must lie in (0,1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("ppo.gae_lambda must lie in [0,1]");
  if (clip < 0.0) throw ConfigError("ppo.clip must be >= 0");
  if (epochs < 1 || minibatch < 1) throw ConfigError("ppo.epochs and ppo.minibatch must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("ppo.learning_rate must be > 0");
  if (horizon < 1) throw ConfigError("ppo.horizon must be >= 1");
  if (num_envs < 1) throw ConfigError("ppo.num_envs must be >= 1");
  for (int h : hidden)
    if (h < 1) throw ConfigError("ppo.hidden sizes must be positive");
}

bool RolloutBuffer::consistent() const {
  const std::size_t n = actions.size();
  const bool columns = observations.size() == n * static_cast<std::size_t>(observation_size) &&
                       masks.size() == n && log_probs.size() == n && raw_rewards.size() == n &&
                       rewards.size() == n && values.size() == n && dones.size() == n;
  const bool post = (advantages.empty() && returns.empty()) ||
                    (advantages.size() == n && returns.size() == n);
  std::size_t covered = 0;
  for (const auto& s : segments) covered += s.end - s.begin;
  return columns && post && covered == n;
}

double RolloutBuffer::mean_raw_reward() const {
  if (raw_rewards.empty()) return 0.0;
  return std::accumulate(raw_rewards.begin(), raw_rewards.end(), 0.0) /
         static_cast<double>(raw_rewards.size());
}

void RolloutBuffer::append(const RolloutBuffer& other) {
  if (observation_size == 0) observation_size = other.observation_size;
  const std::size_t offset = size();
  observations.insert(observations.end(), other.observations.begin(), other.observations.end());
  masks.insert(masks.end(), other.masks.begin(), other.masks.end());
  actions.insert(actions.end(), other.actions.begin(), other.actions.end());
  log_probs.insert(log_probs.end(), other.log_probs.begin(), other.log_probs.end());
  raw_rewards.insert(raw_rewards.end(), other.raw_rewards.begin(), other.raw_rewards.end());
  rewards.insert(rewards.end(), other.rewards.begin(), other.rewards.end());
  values.insert(values.end(), other.values.begin(), other.values.end());
  dones.insert(dones.end(), other.dones.begin(), other.dones.end());
  advantages.insert(advantages.end(), other.advantages.begin(), other.advantages.end());
  returns.insert(returns.end(), other.returns.begin(), other.returns.end());
  for (Segment s : other.segments) {
    s.begin += offset;
    s.end += offset;
    segments.push_back(s);
  }
  episode_returns.insert(episode_returns.end(), other.episode_returns.begin(),
                         other.episode_returns.end());
}

void compute_gae(RolloutBuffer& buffer, double gamma, double lambda) {
  const std::size_t n = buffer.size();
  buffer.advantages.assign(n, 0.0);
  buffer.returns.assign(n, 0.0);
  for (const auto& seg : buffer.segments) {
    double next_value = seg.bootstrap_value;
    double gae = 0.0;
    for (std::size_t i = seg.end; i-- > seg.begin;) {
      const double not_done = buffer.dones[i] ? 0.0 : 1.0;
      const double delta = buffer.rewards[i] + gamma * next_value * not_done - buffer.values[i];
      gae = delta + gamma * lambda * not_done * gae;
      buffer.advantages[i] = gae;
      buffer.returns[i] = gae + buffer.values[i];
      next_value = buffer.values[i];
    }
  }
  for (double a : buffer.advantages)
    if (!std::isfinite(a)) throw NumericError("non-finite advantage");
}

void RunningStat::push(double x) {
  ++count;
  const double delta = x - mean;
  mean += delta / static_cast<double>(count);
  m2 += delta * (x - mean);
}

double RunningStat::stddev() const { return std::sqrt(variance()); }

RolloutCollector::RolloutCollector(EnvConfig env, DRConfig dr, int num_envs, std::uint64_t seed,
                                   double gamma, bool scale_rewards)
    : env_config_(std::move(env)),
      dr_config_(std::move(dr)),
      lesson_(EnvLesson::no_curriculum()),
      gamma_(gamma),
      scale_rewards_(scale_rewards) {
  if (num_envs < 1) throw ConfigError("need at least one environment instance");
  if (dr_config_.enabled) dr_config_.validate();
  for (int k = 0; k < num_envs; ++k) {
    const std::uint64_t inst_seed = derive_seed(seed, static_cast<std::uint64_t>(k) + 1);
    instances_.push_back(Instance{BusEnv(env_config_), Rng(derive_seed(inst_seed, 0xac7)),
                                  std::nullopt, inst_seed, 0, 0.0, 0.0});
  }
}

int RolloutCollector::observation_size() const { return instances_.front().env.observation_size(); }

void RolloutCollector::set_lesson(const EnvLesson& lesson) {
  lesson.validate();
  if (lesson == lesson_) return;
  lesson_ = lesson;
  for (auto& inst : instances_) {
    inst.pending.reset();
    inst.episode_return = 0.0;
    inst.discounted_return = 0.0;
  }
}

void RolloutCollector::begin_episode(Instance& inst) {
  // An episode may in principle end without any decision; keep resetting.
  for (int attempt = 0; attempt < 16 && !inst.pending; ++attempt) {
    const std::uint64_t episode_seed = derive_seed(inst.seed, 0xe915, static_cast<std::uint64_t>(inst.episode++));
    inst.env.reset(lesson_, draw_for_episode(dr_config_, episode_seed), episode_seed);
    inst.episode_return = 0.0;
    inst.pending = inst.env.step_until_decision();
  }
  if (!inst.pending) throw ContractError("environment produced no decision events");
}

void RolloutCollector::collect_instance(Instance& inst, const PolicyNets& nets, int steps,
                                        RolloutBuffer& out) {
  out.observation_size = inst.env.observation_size();
  const RewardWeights weights = inst.env.reward_weights();
  for (int t = 0; t < steps; ++t) {
    if (!inst.pending) begin_episode(inst);
    const DecisionEvent event = *inst.pending;
    const PolicyOutput po = policy_forward(nets, event.observation, event.mask);
    const int action = sample_action(po, inst.action_rng);

    const Counters before = inst.env.state().counters;
    inst.env.apply_action(event, action);
    inst.pending = inst.env.step_until_decision();
    const double reward = compute_reward(before, inst.env.state().counters, weights);
    inst.episode_return += reward;

    out.observations.insert(out.observations.end(), event.observation.begin(), event.observation.end());
    out.masks.push_back(event.mask);
    out.actions.push_back(action);
    out.log_probs.push_back(po.log_probs[static_cast<std::size_t>(action)]);
    out.raw_rewards.push_back(reward);
    out.values.push_back(po.value);
    out.dones.push_back(inst.pending ? 0 : 1);
    if (!inst.pending) out.episode_returns.push_back(inst.episode_return);
  }
  RolloutBuffer::Segment seg{0, out.size(), 0.0};
  if (inst.pending) {
    seg.bootstrap_value = policy_forward(nets, inst.pending->observation, inst.pending->mask).value;
  }
  out.segments.push_back(seg);
}

RolloutBuffer RolloutCollector::collect(const PolicyNets& nets, int horizon, Execution exec) {
  if (horizon < 1) throw ContractError("rollout horizon must be >= 1");
  const int k = num_envs();
  std::vector<int> steps(static_cast<std::size_t>(k), horizon / k);
  for (int i = 0; i < horizon % k; ++i) ++steps[static_cast<std::size_t>(i)];

  std::vector<RolloutBuffer> parts(static_cast<std::size_t>(k));
  if (exec == Execution::kParallel) {
    ExceptionSlot failure;
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < k; ++i)
      failure.run([&] {
        collect_instance(instances_[static_cast<std::size_t>(i)], nets, steps[static_cast<std::size_t>(i)],
                         parts[static_cast<std::size_t>(i)]);
      });
    failure.rethrow();
  } else {
    for (int i = 0; i < k; ++i)
      collect_instance(instances_[static_cast<std::size_t>(i)], nets, steps[static_cast<std::size_t>(i)],
                       parts[static_cast<std::size_t>(i)]);
  }

  RolloutBuffer merged;
  merged.observation_size = observation_size();
  for (int i = 0; i < k; ++i) {
    RolloutBuffer& part = parts[static_cast<std::size_t>(i)];
    Instance& inst = instances_[static_cast<std::size_t>(i)];
    part.rewards = part.raw_rewards;
    if (scale_rewards_) {
      for (std::size_t t = 0; t < part.size(); ++t) {
        inst.discounted_return = gamma_ * inst.discounted_return + part.raw_rewards[t];
        return_stat_.push(inst.discounted_return);
        if (part.dones[t]) inst.discounted_return = 0.0;
      }
    }
    merged.append(part);
  }
  if (scale_rewards_) {
    const double scale = 1.0 / std::max(return_stat_.stddev(), 1e-8);
    for (double& r : merged.rewards) r *= scale;
  }
  total_decisions_ += static_cast<std::int64_t>(merged.size());
  return merged;
}

RolloutBuffer collect_rollout(const EnvConfig& env, const PolicyNets& nets, const EnvLesson& lesson,
                              const DRConfig& dr, int horizon, std::uint64_t seed) {
  RolloutCollector collector(env, dr, 1, seed);
  collector.set_lesson(lesson);
  return collector.collect(nets, horizon, Execution::kSerial);
}

PpoLoss ppo_sample_loss(const PolicyNets& nets, const RolloutBuffer& buffer, std::size_t index,
                        double advantage, const PpoConfig& cfg, PolicyNets* grad, double weight) {
  MlpCache actor_cache;
  MlpCache critic_cache;
  const PolicyOutput po =
      policy_forward(nets, buffer.observation(index), buffer.masks[index], &actor_cache, &critic_cache);
  const auto action = static_cast<std::size_t>(buffer.actions[index]);
  const double logp = po.log_probs[action];
  const double ratio = std::exp(logp - buffer.log_probs[index]);
  const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
  const double surrogate = std::min(ratio * advantage, clipped * advantage);
  const double entropy = po.entropy();
  const double value_err = po.value - buffer.returns[index];

  PpoLoss loss;
  loss.policy = -surrogate;
  loss.value = 0.5 * value_err * value_err;
  loss.entropy = entropy;
  loss.total = loss.policy + cfg.value_coef * loss.value - cfg.entropy_coef * entropy;
  loss.approx_kl = buffer.log_probs[index] - logp;
  loss.clip_fraction = std::abs(ratio - 1.0) > cfg.clip ? 1.0 : 0.0;
  if (!std::isfinite(loss.total)) throw NumericError("non-finite PPO loss at sample " + std::to_string(index));
  if (!grad) return loss;

  // The unclipped branch carries gradient only while it is strictly the
  // active one; at the clip boundary the gradient is zero.
  const bool active = (advantage > 0.0 && ratio < 1.0 + cfg.clip) ||
                      (advantage < 0.0 && ratio > 1.0 - cfg.clip);
  const double d_logp = active ? -ratio * advantage : 0.0;

  std::vector<double> d_logits(kNumActions, 0.0);
  for (std::size_t a = 0; a < static_cast<std::size_t>(kNumActions); ++a) {
    if (!po.mask.test(a)) continue;
    const double p = po.probs[a];
    const double d_entropy = -p * (po.log_probs[a] + entropy);
    d_logits[a] = d_logp * ((a == action ? 1.0 : 0.0) - p) - cfg.entropy_coef * d_entropy;
    d_logits[a] *= weight;
  }
  mlp_backward(nets.actor, actor_cache, d_logits, grad->actor);
  const double d_value = weight * cfg.value_coef * value_err;
  mlp_backward(nets.critic, critic_cache, std::span<const double>(&d_value, 1), grad->critic);
  return loss;
}

PpoLoss ppo_minibatch_gradient(const PolicyNets& nets, const RolloutBuffer& buffer,
                               std::span<const std::size_t> indices,
                               std::span<const double> advantages, const PpoConfig& cfg,
                               PolicyNets& grad, Execution exec) {
  const std::size_t b = indices.size();
  if (b == 0) throw ContractError("empty minibatch");
  const double weight = 1.0 / static_cast<double>(b);
  std::vector<PpoLoss> losses(b);

  if (exec == Execution::kParallel) {
    // Blocks of a few samples per thread bound the scratch to cache size; each
    // block is reduced in sample order, so the sum matches the serial path.
    const std::size_t block = std::min(b, static_cast<std::size_t>(4 * max_threads()));
    thread_local std::vector<PolicyNets> scratch;
    if (scratch.size() < block || scratch.front().actor.sizes != nets.actor.sizes ||
        scratch.front().critic.sizes != nets.critic.sizes)
      scratch.assign(block, nets.zeros_like());
    // Worker threads must see the caller's buffers, not their own thread_local.
    std::vector<PolicyNets>& per_sample = scratch;
    for (std::size_t start = 0; start < b; start += block) {
      const std::size_t count = std::min(block, b - start);
      ExceptionSlot failure;
#pragma omp parallel for schedule(static)
      for (std::size_t i = 0; i < count; ++i)
        failure.run([&] {
          PolicyNets& g = per_sample[i];
          std::fill(g.actor.data.begin(), g.actor.data.end(), 0.0);
          std::fill(g.critic.data.begin(), g.critic.data.end(), 0.0);
          const std::size_t k = start + i;
          losses[k] = ppo_sample_loss(nets, buffer, indices[k], advantages[indices[k]], cfg, &g, weight);
        });
      failure.rethrow();
      for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = 0; j < grad.actor.data.size(); ++j) grad.actor.data[j] += per_sample[i].actor.data[j];
        for (std::size_t j = 0; j < grad.critic.data.size(); ++j) grad.critic.data[j] += per_sample[i].critic.data[j];
      }
    }
  } else {
    PolicyNets sample = nets.zeros_like();
    for (std::size_t k = 0; k < b; ++k) {
      std::fill(sample.actor.data.begin(), sample.actor.data.end(), 0.0);
      std::fill(sample.critic.data.begin(), sample.critic.data.end(), 0.0);
      losses[k] = ppo_sample_loss(nets, buffer, indices[k], advantages[indices[k]], cfg, &sample, weight);
      for (std::size_t j = 0; j < grad.actor.data.size(); ++j) grad.actor.data[j] += sample.actor.data[j];
      for (std::size_t j = 0; j < grad.critic.data.size(); ++j) grad.critic.data[j] += sample.critic.data[j];
    }
  }

  PpoLoss mean;
  for (const PpoLoss& l : losses) {
    mean.policy += l.policy * weight;
    mean.value += l.value * weight;
    mean.entropy += l.entropy * weight;
    mean.total += l.total * weight;
    mean.approx_kl += l.approx_kl * weight;
    mean.clip_fraction += l.clip_fraction * weight;
  }
  return mean;
}

PpoOptimizer::PpoOptimizer(const PolicyNets& nets, const PpoConfig& cfg)
    : cfg_(cfg),
      actor_opt_(nets.actor.data.size(), AdamConfig{cfg.learning_rate}),
      critic_opt_(nets.critic.data.size(), AdamConfig{cfg.learning_rate}) {
  cfg_.validate();
}

PpoLoss PpoOptimizer::update(PolicyNets& nets, const RolloutBuffer& buffer, Rng& rng, Execution exec) {
  const std::size_t n = buffer.size();
  if (n == 0) throw ContractError("PPO update on an empty buffer");
  if (buffer.advantages.size() != n) throw ContractError("PPO update needs advantages (run compute_gae)");

  std::vector<double> adv = buffer.advantages;
  if (cfg_.normalize_advantages && n > 1) {
    RunningStat stat;
    for (double a : adv) stat.push(a);
    const double sd = stat.stddev();
    for (double& a : adv) a = (a - stat.mean) / (sd + 1e-8);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  PpoLoss last;
  PpoLoss sum;
  int batches = 0;
  const auto mb = static_cast<std::size_t>(cfg_.minibatch);
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t start = 0; start < n; start += mb) {
      const std::size_t end = std::min(n, start + mb);
      PolicyNets grad = nets.zeros_like();
      last = ppo_minibatch_gradient(nets, buffer, std::span(order).subspan(start, end - start), adv, cfg_,
                                    grad, exec);
      if (!grad.actor.all_finite() || !grad.critic.all_finite())
        throw NumericError("non-finite PPO gradient");
      clip_grad_norm(grad.actor.data, cfg_.max_grad_norm);
      clip_grad_norm(grad.critic.data, cfg_.max_grad_norm);
      actor_opt_.step(nets.actor.data, grad.actor.data);
      critic_opt_.step(nets.critic.data, grad.critic.data);
      sum.policy += last.policy;
      sum.value += last.value;
      sum.entropy += last.entropy;
      sum.total += last.total;
      sum.approx_kl += last.approx_kl;
      sum.clip_fraction += last.clip_fraction;
      ++batches;
    }
  }
  const double inv = 1.0 / batches;
  sum.policy *= inv;
  sum.value *= inv;
  sum.entropy *= inv;
  sum.total *= inv;
  sum.approx_kl *= inv;
  sum.clip_fraction *= inv;
  return sum;
}

std::vector<double> evaluate_policy(const EnvConfig& env, const DRConfig& dr, const PolicyNets& nets,
                                    const EnvLesson& lesson, int episodes, std::uint64_t seed,
                                    bool greedy, Execution exec) {
  std::vector<double> returns(static_cast<std::size_t>(std::max(0, episodes)), 0.0);
  auto run = [&](int e) {
    const std::uint64_t episode_seed = derive_seed(seed, 0xe7a1, static_cast<std::uint64_t>(e));
    BusEnv sim(env);
    sim.reset(lesson, draw_for_episode(dr, episode_seed), episode_seed);
    Rng action_rng(derive_seed(episode_seed, 0xac7));
    const RewardWeights weights = sim.reward_weights();
    double total = 0.0;
    auto event = sim.step_until_decision();
    while (event) {
      const PolicyOutput po = policy_forward(nets, event->observation, event->mask);
      const int action = greedy ? greedy_action(po) : sample_action(po, action_rng);
      const Counters before = sim.state().counters;
      sim.apply_action(*event, action);
      event = sim.step_until_decision();
      total += compute_reward(before, sim.state().counters, weights);
    }
    returns[static_cast<std::size_t>(e)] = total;
  };
  if (exec == Execution::kParallel) {
    ExceptionSlot failure;
#pragma omp parallel for schedule(dynamic, 1)
    for (int e = 0; e < episodes; ++e) failure.run([&] { run(e); });
    failure.rethrow();
  } else {
    for (int e = 0; e < episodes; ++e) run(e);
  }
  return returns;
}

}  // namespace busrl
