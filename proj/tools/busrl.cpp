// Command-line entry point: train, evaluate, plot, validate-config.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "busrl/config.hpp"
#include "busrl/curricula.hpp"
#include "busrl/errors.hpp"
#include "busrl/harness.hpp"
#include "busrl/plots.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitAbort = 3;

std::string output_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("BUSRL_OUTPUT_ROOT"); env && *env) return env;
  return "runs";
}

busrl::Execution execution(bool serial) {
  return serial ? busrl::Execution::kSerial : busrl::Execution::kParallel;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace busrl;
  CLI::App app{"Bus-corridor RL with curriculum baselines and a lesson setter"};
  app.set_version_flag("--version", BUSRL_VERSION);
  app.require_subcommand(1);

  // train
  std::string method = "none", config_path, curriculum_path, ablation = "all", dr, out, label;
  std::vector<std::uint64_t> seeds;
  std::int64_t steps = 0;
  bool serial = false;
  auto* train = app.add_subcommand("train", "Train one method over one or more seeds");
  train->add_option("--method", method, "none | budget | stagnancy | setter")->capture_default_str();
  train->add_option("--config", config_path, "JSON run config (defaults when omitted)");
  train->add_option("--curriculum", curriculum_path, "Curriculum file for budget / stagnancy");
  train->add_option("--ablation", ablation, "Setter components: all, S, alpha, beta or joined with '+'")
      ->capture_default_str();
  train->add_option("--dr", dr, "Domain randomization on | off (overrides config)")
      ->check(CLI::IsMember({"on", "off"}));
  train->add_option("--seed", seeds, "Seed; repeat for several runs");
  train->add_option("--steps", steps, "Total decision steps per run (overrides config)");
  train->add_option("--out", out, "Output root (else $BUSRL_OUTPUT_ROOT, else ./runs)");
  train->add_option("--label", label, "Run-group directory name");
  train->add_flag("--serial", serial, "Use the single-threaded reference path");

  // evaluate
  std::string checkpoint, trace_path;
  int episodes = 4;
  bool greedy = false;
  std::uint64_t eval_seed = 1;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on the no-curriculum environment");
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint.txt from a training run")->required();
  evaluate->add_option("--config", config_path, "JSON run config");
  evaluate->add_option("--dr", dr, "on | off")->check(CLI::IsMember({"on", "off"}));
  evaluate->add_option("--episodes", episodes, "Episode count")->capture_default_str();
  evaluate->add_option("--seed", eval_seed, "Evaluation seed")->capture_default_str();
  evaluate->add_flag("--greedy", greedy, "Take the most probable action instead of sampling");
  evaluate->add_option("--trace", trace_path, "Write a per-decision JSONL trace of the first episode");

  // plot
  std::vector<std::string> logs;
  std::string plot_out = "plots";
  double smoothing = 0.9;
  auto* plot = app.add_subcommand("plot", "Render reward curves and lesson traces from run logs");
  plot->add_option("logs", logs, "run.jsonl files")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", plot_out, "Output directory")->capture_default_str();
  plot->add_option("--smoothing", smoothing, "EMA coefficient")->capture_default_str()->check(CLI::Range(0.0, 1.0));

  // validate-config
  std::vector<std::string> validate_paths;
  auto* validate = app.add_subcommand("validate-config", "Check run configs and curriculum files");
  validate->add_option("files", validate_paths, "Config or curriculum JSON files")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      ExperimentSpec spec;
      spec.method = method_from_string(method);
      spec.config_path = config_path;
      spec.curriculum_path = curriculum_path;
      spec.ablation = AblationMask::parse(ablation);
      if (!dr.empty()) spec.dr_enabled = dr == "on";
      if (!seeds.empty()) spec.seeds = seeds;
      if (steps > 0) spec.total_steps = steps;
      spec.output_dir = output_root(out);
      spec.label = label;
      const auto results = run_experiment(spec, execution(serial));
      int code = kExitOk;
      for (const auto& r : results) {
        if (r.aborted) {
          std::cerr << "seed " << r.seed << " aborted: " << r.error << " (log: " << r.log_path << ")\n";
          code = kExitAbort;
        } else {
          std::cout << "seed " << r.seed << ": " << r.steps << " steps, " << r.iterations
                    << " iterations, eval " << r.initial_eval << " -> " << r.final_eval << "  " << r.log_path
                    << '\n';
        }
      }
      return code;
    }
    if (*evaluate) {
      AppConfig cfg = config_path.empty() ? parse_config("{}") : load_config(config_path);
      if (!dr.empty()) cfg.dr.enabled = dr == "on";
      std::ifstream in(checkpoint);
      if (!in) throw ConfigError("cannot open checkpoint " + checkpoint);
      PolicyNets nets;
      bool have_actor = false, have_critic = false;
      for (auto& [name, params] : read_checkpoint(in)) {
        if (name == "actor") nets.actor = std::move(params), have_actor = true;
        if (name == "critic") nets.critic = std::move(params), have_critic = true;
      }
      if (!have_actor || !have_critic) throw ConfigError("checkpoint lacks actor or critic");
      if (nets.actor.input_size() != BusEnv::observation_size(cfg.env.num_stations, cfg.env.num_buses))
        throw ConfigError("checkpoint does not match the configured station / bus counts");
      const EnvLesson lesson = EnvLesson::no_curriculum();
      const auto returns = evaluate_policy(cfg.env, cfg.dr, nets, lesson, episodes, eval_seed, greedy,
                                           Execution::kParallel);
      double mean = 0.0;
      for (std::size_t e = 0; e < returns.size(); ++e) {
        std::cout << "episode " << e << ": return " << returns[e] << '\n';
        mean += returns[e] / static_cast<double>(returns.size());
      }
      std::cout << "mean return: " << mean << '\n';
      if (!trace_path.empty()) {
        std::ofstream trace(trace_path);
        if (!trace) throw ConfigError("cannot write " + trace_path);
        BusEnv env(cfg.env);
        const std::uint64_t episode_seed = derive_seed(eval_seed, 0x7ace);
        Rng dr_rng(derive_seed(episode_seed, 0xd7));
        env.reset(lesson, draw_episode(cfg.dr, dr_rng), episode_seed);
        Rng act_rng(derive_seed(episode_seed, 0xac7));
        // One record per decision tick plus the final tick; reward covers the
        // interval since the previous record.
        Counters prev = env.state().counters;
        while (auto event = env.step_until_decision()) {
          trace << env.trace_record(compute_reward(prev, env.state().counters, env.reward_weights())) << '\n';
          prev = env.state().counters;
          const PolicyOutput out = policy_forward(nets, event->observation, event->mask);
          env.apply_action(*event, greedy ? greedy_action(out) : sample_action(out, act_rng));
        }
        trace << env.trace_record(compute_reward(prev, env.state().counters, env.reward_weights())) << '\n';
      }
      return kExitOk;
    }
    if (*plot) {
      for (const auto& p : render_plots(logs, plot_out, smoothing)) std::cout << p << '\n';
      return kExitOk;
    }
    if (*validate) {
      for (const auto& path : validate_paths) {
        std::ifstream in(path);
        std::stringstream text;
        text << in.rdbuf();
        // Curriculum files carry a "levels" array; everything else is a run config.
        if (text.str().find("\"levels\"") != std::string::npos) {
          const CurriculumConfig c = load_curriculum(path);
          std::cout << path << ": curriculum '" << c.name << "', " << c.levels.size() << " levels\n";
        } else {
          load_config(path);
          std::cout << path << ": run config ok\n";
        }
      }
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "aborted: " << e.what() << '\n';
    return kExitAbort;
  }
  return kExitOk;
}
