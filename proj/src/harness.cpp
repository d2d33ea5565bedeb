#include "busrl/harness.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "busrl/curricula.hpp"
#include "busrl/errors.hpp"
#include "json.hpp"

namespace busrl {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t x) {
  std::ostringstream out;
  out << std::hex << x;
  return out.str();
}

std::string mask_string(const ActionMask& mask) {
  std::string out;
  for (int a = 0; a < kNumActions; ++a)
    if (mask.test(static_cast<std::size_t>(a))) out += (out.empty() ? "" : ",") + std::to_string(a);
  return out;
}

json nullable(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }

// Line-delimited JSON writer that flushes every record so partial runs survive.
class JsonlWriter {
 public:
  explicit JsonlWriter(const fs::path& path) : out_(path) {
    if (!out_) throw ConfigError("cannot write " + path.string());
  }
  void write(const json& rec) { out_ << rec.dump() << '\n' << std::flush; }

 private:
  std::ofstream out_;
};

}  // namespace

std::string to_string(Method method) {
  switch (method) {
    case Method::kNone: return "none";
    case Method::kBudget: return "budget";
    case Method::kStagnancy: return "stagnancy";
    case Method::kSetter: return "setter";
  }
  return "none";
}

Method method_from_string(const std::string& name) {
  if (name == "none") return Method::kNone;
  if (name == "budget") return Method::kBudget;
  if (name == "stagnancy") return Method::kStagnancy;
  if (name == "setter") return Method::kSetter;
  throw ConfigError("unknown method '" + name + "' (none, budget, stagnancy, setter)");
}

void ExperimentSpec::validate() const {
  if (seeds.empty()) throw ConfigError("experiment needs at least one seed");
  if (!config_path.empty() && !fs::exists(config_path))
    throw ConfigError("config file not found: " + config_path);
  if (method == Method::kBudget || method == Method::kStagnancy) {
    if (curriculum_path.empty()) throw ConfigError(to_string(method) + " method needs a curriculum file");
    if (!fs::exists(curriculum_path)) throw ConfigError("curriculum file not found: " + curriculum_path);
  }
  if (total_steps && *total_steps < 1) throw ConfigError("total steps must be >= 1");
  ablation.validate();
}

AppConfig config_for(const ExperimentSpec& spec) {
  AppConfig cfg = spec.config_path.empty() ? parse_config("{}") : load_config(spec.config_path);
  if (spec.dr_enabled) cfg.dr.enabled = *spec.dr_enabled;
  if (spec.total_steps) cfg.harness.total_steps = *spec.total_steps;
  return cfg;
}

std::string ExperimentSpec::resolved_label(const AppConfig& config) const {
  if (!label.empty()) return label;
  std::string out = to_string(method);
  if (method == Method::kBudget || method == Method::kStagnancy)
    out += "-" + fs::path(curriculum_path).stem().string();
  if (method == Method::kSetter) out += "-" + ablation.to_string();
  out += config.dr.enabled ? "-dr" : "-nodr";
  return out;
}

std::string ExperimentSpec::canonical(const AppConfig& config) const {
  json doc;
  doc["method"] = to_string(method);
  doc["curriculum"] = curriculum_path.empty() ? "" : fs::path(curriculum_path).filename().string();
  doc["ablation"] = ablation.to_string();
  doc["config"] = json::parse(dump_config(config));
  return doc.dump();
}

RunResult run_single(const ExperimentSpec& spec, const AppConfig& config, std::uint64_t seed,
                     Execution exec) {
  RunResult result;
  result.seed = seed;
  const std::string label = spec.resolved_label(config);
  const fs::path dir = fs::path(spec.output_dir) / label / ("seed" + std::to_string(seed));
  fs::create_directories(dir);
  result.run_dir = dir.string();
  result.log_path = (dir / "run.jsonl").string();
  result.checkpoint_path = (dir / "checkpoint.txt").string();

  JsonlWriter log(result.log_path);
  JsonlWriter timing(dir / "timing.jsonl");
  std::optional<JsonlWriter> lessons;
  if (spec.method == Method::kSetter) {
    result.lesson_trace_path = (dir / "lessons.jsonl").string();
    lessons.emplace(result.lesson_trace_path);
  }

  log.write({{"type", "header"},
             {"schema_version", kRunLogSchemaVersion},
             {"method", to_string(spec.method)},
             {"label", label},
             {"seed", seed},
             {"ablation", spec.ablation.to_string()},
             {"dr", config.dr.enabled},
             {"spec_hash", hex(fnv1a(spec.canonical(config)))},
             {"code_version", BUSRL_VERSION}});

  const auto wall_start = std::chrono::steady_clock::now();
  try {
    const EnvLesson target = EnvLesson::no_curriculum();
    RolloutCollector collector(config.env, config.dr, config.ppo.num_envs, derive_seed(seed, 0xc011),
                               config.ppo.gamma, config.ppo.scale_rewards);
    Rng init_rng(derive_seed(seed, 0x1a17));
    PolicyNets nets = PolicyNets::random(collector.observation_size(), config.ppo.hidden, init_rng);
    PpoOptimizer ppo(nets, config.ppo);
    Rng update_rng(derive_seed(seed, 0x5afe));
    const std::uint64_t eval_seed = derive_seed(seed, 0xe7a1);

    auto evaluate = [&](std::int64_t step) {
      if (config.harness.eval_episodes == 0) return 0.0;
      const auto returns =
          evaluate_policy(config.env, config.dr, nets, target, config.harness.eval_episodes, eval_seed, false, exec);
      double mean = 0.0;
      for (double r : returns) mean += r / static_cast<double>(returns.size());
      log.write({{"type", "evaluation"}, {"step", step}, {"mean_return", mean}, {"episodes", returns.size()}});
      return mean;
    };
    result.initial_eval = evaluate(0);

    // Curriculum state for the baseline schedulers.
    std::optional<CurriculumConfig> curriculum;
    std::optional<StagnancyScheduler> stagnancy;
    if (spec.method == Method::kBudget || spec.method == Method::kStagnancy) {
      curriculum = load_curriculum(spec.curriculum_path);
      fill_equal_budgets(*curriculum, config.harness.total_steps);
      if (spec.method == Method::kStagnancy) stagnancy.emplace(*curriculum);
    }

    std::int64_t step = 0;
    int iteration = 0;
    // One agent iteration on `lesson`: rollout, GAE, PPO update, log record.
    auto train_on = [&](const EnvLesson& lesson, json record) {
      collector.set_lesson(lesson);
      RolloutBuffer buffer = collector.collect(nets, config.ppo.horizon, exec);
      compute_gae(buffer, config.ppo.gamma, config.ppo.gae_lambda);
      const PpoLoss loss = ppo.update(nets, buffer, update_rng, exec);
      step += static_cast<std::int64_t>(buffer.size());
      const double mean_reward = buffer.mean_raw_reward();
      double episode_return = 0.0;
      for (double r : buffer.episode_returns) episode_return += r / static_cast<double>(buffer.episode_returns.size());

      record["type"] = "iteration";
      record["iteration"] = iteration;
      record["step"] = step;
      record["mean_reward"] = mean_reward;
      record["episode_return"] = buffer.episode_returns.empty() ? json(nullptr) : json(episode_return);
      record["actions"] = mask_string(lesson.actions);
      record["alpha"] = lesson.perturbation;
      record["beta"] = nullable(lesson.bunching);
      record["policy_loss"] = loss.policy;
      record["value_loss"] = loss.value;
      record["entropy"] = loss.entropy;
      record["approx_kl"] = loss.approx_kl;
      timing.write({{"iteration", iteration},
                    {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count()}});
      ++iteration;
      return std::pair{mean_reward, std::move(record)};
    };

    if (spec.method == Method::kSetter) {
      Rng setter_init(derive_seed(seed, 0x5e77));
      Setter setter(config.setter, spec.ablation, setter_init);
      Rng setter_rng(derive_seed(seed, 0x5e78));
      json pending;
      const LessonRunner runner = [&](const Lesson& lesson, int) {
        json rec;
        rec["S"] = lesson.action_space;
        rec["level"] = nullptr;
        const std::int64_t before = step;
        auto [reward, filled] = train_on(EnvLesson::from_lesson(lesson), rec);
        pending = std::move(filled);
        return LessonOutcome{reward, step - before};
      };
      while (step < config.harness.total_steps) {
        // One setter iteration per pass; the trace record closes the log line.
        run_curriculum_training(setter, runner, 1, setter_rng, [&](const LessonTraceRecord& t) {
          pending["setter_loss"] = t.setter_loss;
          pending["setter_mean_reward"] = setter.last_mean_reward();
          log.write(pending);
          lessons->write({{"iteration", iteration - 1},
                          {"step", step},
                          {"S", t.lesson.action_space},
                          {"alpha", t.lesson.perturbation},
                          {"beta", t.lesson.bunching},
                          {"mean_reward", t.mean_reward},
                          {"warmup", t.warmup}});
        });
      }
      std::ofstream ck(result.checkpoint_path);
      write_checkpoint(ck, {{"actor", &nets.actor}, {"critic", &nets.critic}, {"setter", &setter.params()}});
    } else {
      while (step < config.harness.total_steps) {
        EnvLesson lesson = EnvLesson::no_curriculum();
        int level = -1;
        if (spec.method == Method::kBudget) {
          level = budget_level_index(*curriculum, step);
          lesson = curriculum->levels[static_cast<std::size_t>(level)].env_lesson();
        } else if (spec.method == Method::kStagnancy) {
          level = stagnancy->level();
          lesson = stagnancy->current().env_lesson();
        }
        json rec;
        rec["S"] = nullptr;
        rec["level"] = level >= 0 ? json(level + 1) : json(nullptr);
        auto [reward, filled] = train_on(lesson, rec);
        if (stagnancy) stagnancy->push(reward);
        log.write(filled);
      }
      std::ofstream ck(result.checkpoint_path);
      write_checkpoint(ck, {{"actor", &nets.actor}, {"critic", &nets.critic}});
    }

    result.steps = step;
    result.iterations = iteration;
    result.final_eval = evaluate(step);
  } catch (const std::exception& e) {
    result.aborted = true;
    result.error = e.what();
    log.write({{"type", "abort"}, {"error", result.error}});
  }
  return result;
}

std::vector<RunResult> run_experiment(const ExperimentSpec& spec, Execution exec) {
  spec.validate();
  const AppConfig config = config_for(spec);
  std::vector<RunResult> results;
  for (std::uint64_t seed : spec.seeds) results.push_back(run_single(spec, config, seed, exec));
  return results;
}

}  // namespace busrl
