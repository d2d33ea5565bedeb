#include "busrl/setter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "busrl/errors.hpp"

namespace busrl {

namespace {

constexpr std::array<int, 3> kHeadOffsets{0, kSetterHeadSizes[0], kSetterHeadSizes[0] + kSetterHeadSizes[1]};
constexpr int kSetterOutputs = kSetterHeadSizes[0] + kSetterHeadSizes[1] + kSetterHeadSizes[2];

int sample_index(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(probs.size()) - 1;
}

std::array<int, 3> choices_of(const Lesson& lesson) {
  return {lesson.action_space, lesson.perturbation, lesson.bunching - kMinBunching};
}

Lesson lesson_from(const std::array<int, 3>& choice, const AblationMask& ablation) {
  Lesson lesson;
  lesson.action_space = ablation.control_action_space ? choice[0] : kPinnedLesson.action_space;
  lesson.perturbation = ablation.control_perturbation ? choice[1] : kPinnedLesson.perturbation;
  lesson.bunching = ablation.control_bunching ? choice[2] + kMinBunching : kPinnedLesson.bunching;
  return lesson;
}

int controlled_count(const AblationMask& ablation) {
  return static_cast<int>(ablation.control_action_space) + static_cast<int>(ablation.control_perturbation) +
         static_cast<int>(ablation.control_bunching);
}

}  // namespace

void AblationMask::validate() const {
  if (!control_action_space && !control_perturbation && !control_bunching)
    throw ConfigError("setter ablation must control at least one lesson component");
}

bool AblationMask::controls(int head) const {
  switch (head) {
    case 0: return control_action_space;
    case 1: return control_perturbation;
    default: return control_bunching;
  }
}

AblationMask AblationMask::parse(const std::string& text) {
  if (text == "all") return {};
  AblationMask mask{false, false, false};
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, '+')) {
    if (part == "S")
      mask.control_action_space = true;
    else if (part == "alpha")
      mask.control_perturbation = true;
    else if (part == "beta")
      mask.control_bunching = true;
    else
      throw ConfigError("unknown ablation component '" + part + "' (use S, alpha, beta or all)");
  }
  mask.validate();
  return mask;
}

std::string AblationMask::to_string() const {
  if (control_action_space && control_perturbation && control_bunching) return "all";
  std::string out;
  auto add = [&](const char* name) { out += (out.empty() ? "" : "+") + std::string(name); };
  if (control_action_space) add("S");
  if (control_perturbation) add("alpha");
  if (control_bunching) add("beta");
  return out;
}

void SetterConfig::validate() const {
  if (!(step_size > 0.0)) throw ConfigError("setter.step_size must be > 0");
  for (int h : hidden)
    if (h < 1) throw ConfigError("setter.hidden sizes must be positive");
}

void LessonHistory::push(const Lesson& lesson, double normalized_reward) {
  if (count_ >= kSetterHistory) {
    std::rotate(lessons_.begin(), lessons_.begin() + 1, lessons_.end());
    std::rotate(rewards_.begin(), rewards_.begin() + 1, rewards_.end());
    lessons_.back() = lesson;
    rewards_.back() = normalized_reward;
  } else {
    lessons_[static_cast<std::size_t>(count_)] = lesson;
    rewards_[static_cast<std::size_t>(count_)] = normalized_reward;
  }
  ++count_;
}

std::array<double, kSetterInputs> LessonHistory::encode() const {
  std::array<double, kSetterInputs> x{};
  for (int k = 0; k < size(); ++k) {
    const Lesson& l = lessons_[static_cast<std::size_t>(k)];
    x[static_cast<std::size_t>(3 * k)] = l.action_space / 14.0;
    x[static_cast<std::size_t>(3 * k + 1)] = l.perturbation / 4.0;
    x[static_cast<std::size_t>(3 * k + 2)] = (l.bunching - 1) / 9.0;
    x[static_cast<std::size_t>(3 * kSetterHistory + k)] = rewards_[static_cast<std::size_t>(k)];
  }
  return x;
}

double LessonHistory::mean_reward() const {
  if (size() == 0) return 0.0;
  return std::accumulate(rewards_.begin(), rewards_.begin() + size(), 0.0) / size();
}

Lesson SetterDistribution::mode() const {
  std::array<int, 3> best{};
  for (int h = 0; h < 3; ++h) {
    const auto& p = probs[static_cast<std::size_t>(h)];
    best[static_cast<std::size_t>(h)] = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
  }
  return {best[0], best[1], best[2] + kMinBunching};
}

double SetterDistribution::probability(const Lesson& lesson, const AblationMask& ablation) const {
  const auto choice = choices_of(lesson);
  double p = 1.0;
  for (int h = 0; h < 3; ++h)
    if (ablation.controls(h))
      p *= probs[static_cast<std::size_t>(h)][static_cast<std::size_t>(choice[static_cast<std::size_t>(h)])];
  return p;
}

SetterDistribution setter_distribution(const MlpParams& params,
                                       const std::array<double, kSetterInputs>& input, MlpCache* cache) {
  const std::vector<double> logits = mlp_forward(params, input, cache);
  SetterDistribution dist;
  for (int h = 0; h < 3; ++h) {
    const auto begin = logits.begin() + kHeadOffsets[static_cast<std::size_t>(h)];
    const auto end = begin + kSetterHeadSizes[static_cast<std::size_t>(h)];
    const double max_logit = *std::max_element(begin, end);
    if (!std::isfinite(max_logit)) throw NumericError("non-finite setter logits");
    double z = 0.0;
    for (auto it = begin; it != end; ++it) z += std::exp(*it - max_logit);
    const double log_z = max_logit + std::log(z);
    auto& p = dist.probs[static_cast<std::size_t>(h)];
    auto& lp = dist.log_probs[static_cast<std::size_t>(h)];
    for (auto it = begin; it != end; ++it) {
      lp.push_back(*it - log_z);
      p.push_back(std::exp(lp.back()));
    }
  }
  return dist;
}

MlpParams make_setter_params(const SetterConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<int> sizes{kSetterInputs};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(kSetterOutputs);
  return MlpParams::random(sizes, Activation::kTanh, rng, 0.01);
}

SetterProposal propose_lesson(const MlpParams& params, const LessonHistory& history,
                              const AblationMask& ablation, Rng& rng) {
  ablation.validate();
  SetterProposal proposal;
  proposal.input = history.encode();
  const SetterDistribution dist = setter_distribution(params, proposal.input);
  for (int h = 0; h < 3; ++h) {
    const auto uh = static_cast<std::size_t>(h);
    // Every head is sampled so the rng stream does not depend on the ablation.
    proposal.head_choice[uh] = sample_index(dist.probs[uh], rng);
    proposal.log_probs[uh] = dist.log_probs[uh][static_cast<std::size_t>(proposal.head_choice[uh])];
  }
  proposal.lesson = lesson_from(proposal.head_choice, ablation);
  return proposal;
}

SetterProposal propose_from_prior(const LessonHistory& history, const AblationMask& ablation, Rng& rng) {
  ablation.validate();
  SetterProposal proposal;
  proposal.input = history.encode();
  proposal.from_prior = true;
  for (int h = 0; h < 3; ++h) {
    const auto uh = static_cast<std::size_t>(h);
    proposal.head_choice[uh] = rng.uniform_int(0, kSetterHeadSizes[uh] - 1);
    proposal.log_probs[uh] = -std::log(static_cast<double>(kSetterHeadSizes[uh]));
  }
  proposal.lesson = lesson_from(proposal.head_choice, ablation);
  return proposal;
}

double setter_loss(const MlpParams& params, const SetterProposal& proposal, const AblationMask& ablation,
                   double mean_reward, bool mean_log_probs, MlpParams* grad) {
  if (!std::isfinite(mean_reward)) throw NumericError("non-finite setter reward signal");
  MlpCache cache;
  const SetterDistribution dist = setter_distribution(params, proposal.input, grad ? &cache : nullptr);
  const double scale = mean_log_probs ? 1.0 / controlled_count(ablation) : 1.0;

  double log_prob_sum = 0.0;
  std::vector<double> d_logits(static_cast<std::size_t>(kSetterOutputs), 0.0);
  for (int h = 0; h < 3; ++h) {
    if (!ablation.controls(h)) continue;
    const auto uh = static_cast<std::size_t>(h);
    const auto choice = static_cast<std::size_t>(proposal.head_choice[uh]);
    log_prob_sum += dist.log_probs[uh][choice];
    for (std::size_t k = 0; k < dist.probs[uh].size(); ++k) {
      const double indicator = k == choice ? 1.0 : 0.0;
      d_logits[static_cast<std::size_t>(kHeadOffsets[uh]) + k] =
          -mean_reward * scale * (indicator - dist.probs[uh][k]);
    }
  }
  const double loss = -mean_reward * scale * log_prob_sum;
  if (grad) mlp_backward(params, cache, d_logits, *grad);
  return loss;
}

double setter_update(MlpParams& params, Adam& optimizer, const SetterProposal& proposal,
                     const AblationMask& ablation, double mean_reward, bool mean_log_probs) {
  MlpParams grad = params.zeros_like();
  const double loss = setter_loss(params, proposal, ablation, mean_reward, mean_log_probs, &grad);
  if (!grad.all_finite()) throw NumericError("non-finite setter gradient");
  if (mean_reward == 0.0) return loss;
  optimizer.step(params.data, grad.data);
  return loss;
}

Setter::Setter(const SetterConfig& cfg, const AblationMask& ablation, Rng& init_rng)
    : cfg_(cfg), ablation_(ablation), params_(make_setter_params(cfg, init_rng)) {
  ablation_.validate();
  optimizer_ = Adam(params_.data.size(), AdamConfig{cfg_.step_size});
}

SetterProposal Setter::propose(Rng& rng) const {
  if (!history_.full()) return propose_from_prior(history_, ablation_, rng);
  return propose_lesson(params_, history_, ablation_, rng);
}

double Setter::observe(const SetterProposal& proposal, double reward) {
  if (!std::isfinite(reward)) throw NumericError("non-finite lesson reward");
  reward_stat_.push(reward);
  const double sd = reward_stat_.stddev();
  const double normalized = reward_stat_.count > 1 && sd > 0.0 ? (reward - reward_stat_.mean) / sd : 0.0;
  history_.push(proposal.lesson, normalized);
  last_mean_reward_ = history_.mean_reward();
  return setter_update(params_, optimizer_, proposal, ablation_, last_mean_reward_, cfg_.mean_log_probs);
}

std::vector<LessonTraceRecord> run_curriculum_training(
    Setter& setter, const LessonRunner& runner, int iterations, Rng& rng,
    const std::function<void(const LessonTraceRecord&)>& on_record) {
  std::vector<LessonTraceRecord> trace;
  std::int64_t step = 0;
  for (int i = 0; i < iterations; ++i) {
    const SetterProposal proposal = setter.propose(rng);
    const LessonOutcome outcome = runner(proposal.lesson, i);
    step += outcome.steps;
    LessonTraceRecord rec;
    rec.iteration = i;
    rec.step = step;
    rec.lesson = proposal.lesson;
    rec.mean_reward = outcome.mean_reward;
    rec.warmup = proposal.from_prior;
    rec.setter_loss = setter.observe(proposal, outcome.mean_reward);
    trace.push_back(rec);
    if (on_record) on_record(rec);
  }
  return trace;
}

}  // namespace busrl
