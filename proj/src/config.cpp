#include "busrl/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "busrl/errors.hpp"
#include "json.hpp"

namespace busrl {

namespace {

using nlohmann::json;
using FieldSetter = std::function<void(const json&)>;

// Applies each key of `section` through `fields`, rejecting unknown keys and
// wrapping type errors with the section/key name.
void apply_section(const json& doc, const std::string& name, const std::map<std::string, FieldSetter>& fields,
                   const std::string& source) {
  if (!doc.contains(name)) return;
  const json& section = doc[name];
  if (!section.is_object()) throw ConfigError(source + ": section '" + name + "' must be an object");
  for (const auto& [key, value] : section.items()) {
    const auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError(source + ": unknown key '" + name + "." + key + "'");
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw ConfigError(source + ": bad value for '" + name + "." + key + "': " + e.what());
    }
  }
}

template <typename T>
FieldSetter bind(T& target) {
  return [&target](const json& v) { target = v.get<T>(); };
}

}  // namespace

void HarnessConfig::validate() const {
  if (total_steps < 1) throw ConfigError("harness.total_steps must be >= 1");
  if (eval_episodes < 0) throw ConfigError("harness.eval_episodes must be >= 0");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ConfigError("harness.smoothing must lie in [0,1)");
}

void AppConfig::validate() const {
  env.validate();
  dr.validate();
  ppo.validate();
  setter.validate();
  harness.validate();
}

AppConfig parse_config(const std::string& text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError(source + ": top level must be an object");
  for (const auto& [key, value] : doc.items()) {
    if (key != "env" && key != "dr" && key != "ppo" && key != "setter" && key != "harness")
      throw ConfigError(source + ": unknown section '" + key + "'");
  }

  AppConfig cfg;
  EnvConfig& e = cfg.env;
  bool headway_given = false;
  apply_section(doc, "env",
                {{"num_stations", bind(e.num_stations)},
                 {"num_buses", bind(e.num_buses)},
                 {"bus_capacity", bind(e.bus_capacity)},
                 {"station_spacing", bind(e.station_spacing)},
                 {"bus_speed", bind(e.bus_speed)},
                 {"arrival_rate", bind(e.arrival_rate)},
                 {"board_time", bind(e.board_time)},
                 {"alight_time", bind(e.alight_time)},
                 {"headway", [&](const json& v) { e.headway = v.get<int>(); headway_given = true; }},
                 {"episode_length", bind(e.episode_length)},
                 {"reward_weight_wait", bind(e.reward_weight_wait)},
                 {"reward_weight_onbus", bind(e.reward_weight_onbus)},
                 {"long_wait_leave_prob", bind(e.long_wait_leave_prob)},
                 {"hold_quantum", bind(e.hold_quantum)},
                 {"perturbation_unit", bind(e.perturbation_unit)},
                 {"adversary_enabled", bind(e.adversary_enabled)},
                 {"seed", bind(e.seed)}},
                source);
  // The headway follows the fleet geometry unless pinned explicitly.
  if (!headway_given) e.headway = e.default_headway();

  DRConfig& d = cfg.dr;
  apply_section(doc, "dr",
                {{"enabled", bind(d.enabled)},
                 {"demand_levels", bind(d.demand_levels)},
                 {"demand_noise_sigma", bind(d.demand_noise_sigma)},
                 {"min_delay", bind(d.min_delay)},
                 {"max_delay", bind(d.max_delay)}},
                source);

  PpoConfig& p = cfg.ppo;
  apply_section(doc, "ppo",
                {{"gamma", bind(p.gamma)},
                 {"gae_lambda", bind(p.gae_lambda)},
                 {"clip", bind(p.clip)},
                 {"epochs", bind(p.epochs)},
                 {"minibatch", bind(p.minibatch)},
                 {"entropy_coef", bind(p.entropy_coef)},
                 {"value_coef", bind(p.value_coef)},
                 {"learning_rate", bind(p.learning_rate)},
                 {"max_grad_norm", bind(p.max_grad_norm)},
                 {"normalize_advantages", bind(p.normalize_advantages)},
                 {"scale_rewards", bind(p.scale_rewards)},
                 {"horizon", bind(p.horizon)},
                 {"num_envs", bind(p.num_envs)},
                 {"hidden", bind(p.hidden)}},
                source);

  SetterConfig& s = cfg.setter;
  apply_section(doc, "setter",
                {{"hidden", bind(s.hidden)},
                 {"step_size", bind(s.step_size)},
                 {"mean_log_probs", bind(s.mean_log_probs)}},
                source);

  HarnessConfig& h = cfg.harness;
  apply_section(doc, "harness",
                {{"total_steps", bind(h.total_steps)},
                 {"eval_episodes", bind(h.eval_episodes)},
                 {"smoothing", bind(h.smoothing)}},
                source);

  try {
    cfg.validate();
  } catch (const ConfigError& err) {
    throw ConfigError(source + ": " + err.what());
  }
  return cfg;
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

std::string dump_config(const AppConfig& c) {
  json doc;
  doc["env"] = {{"num_stations", c.env.num_stations},
                {"num_buses", c.env.num_buses},
                {"bus_capacity", c.env.bus_capacity},
                {"station_spacing", c.env.station_spacing},
                {"bus_speed", c.env.bus_speed},
                {"arrival_rate", c.env.arrival_rate},
                {"board_time", c.env.board_time},
                {"alight_time", c.env.alight_time},
                {"headway", c.env.headway},
                {"episode_length", c.env.episode_length},
                {"reward_weight_wait", c.env.reward_weight_wait},
                {"reward_weight_onbus", c.env.reward_weight_onbus},
                {"long_wait_leave_prob", c.env.long_wait_leave_prob},
                {"hold_quantum", c.env.hold_quantum},
                {"perturbation_unit", c.env.perturbation_unit},
                {"adversary_enabled", c.env.adversary_enabled},
                {"seed", c.env.seed}};
  doc["dr"] = {{"enabled", c.dr.enabled},
               {"demand_levels", c.dr.demand_levels},
               {"demand_noise_sigma", c.dr.demand_noise_sigma},
               {"min_delay", c.dr.min_delay},
               {"max_delay", c.dr.max_delay}};
  doc["ppo"] = {{"gamma", c.ppo.gamma},
                {"gae_lambda", c.ppo.gae_lambda},
                {"clip", c.ppo.clip},
                {"epochs", c.ppo.epochs},
                {"minibatch", c.ppo.minibatch},
                {"entropy_coef", c.ppo.entropy_coef},
                {"value_coef", c.ppo.value_coef},
                {"learning_rate", c.ppo.learning_rate},
                {"max_grad_norm", c.ppo.max_grad_norm},
                {"normalize_advantages", c.ppo.normalize_advantages},
                {"scale_rewards", c.ppo.scale_rewards},
                {"horizon", c.ppo.horizon},
                {"num_envs", c.ppo.num_envs},
                {"hidden", c.ppo.hidden}};
  doc["setter"] = {{"hidden", c.setter.hidden},
                   {"step_size", c.setter.step_size},
                   {"mean_log_probs", c.setter.mean_log_probs}};
  doc["harness"] = {{"total_steps", c.harness.total_steps},
                    {"eval_episodes", c.harness.eval_episodes},
                    {"smoothing", c.harness.smoothing}};
  return doc.dump(2);
}

}  // namespace busrl
