#ifndef BUSRL_CONFIG_HPP_
#define BUSRL_CONFIG_HPP_

#include <cstdint>
#include <string>

#include "busrl/agent.hpp"
#include "busrl/domain_randomization.hpp"
#include "busrl/environment.hpp"
#include "busrl/setter.hpp"

namespace busrl {

struct HarnessConfig {
  std::int64_t total_steps = 100000;  // decision steps per run
  int eval_episodes = 16;
  double smoothing = 0.9;             // EMA coefficient for reward plots

  void validate() const;
};

// Everything a run reads from the JSON config file. Sections: "env", "dr",
// "ppo", "setter", "harness"; all keys optional, unknown keys rejected.
struct AppConfig {
  EnvConfig env;
  DRConfig dr;
  PpoConfig ppo;
  SetterConfig setter;
  HarnessConfig harness;

  void validate() const;
};

AppConfig parse_config(const std::string& text, const std::string& source = "<string>");
AppConfig load_config(const std::string& path);
std::string dump_config(const AppConfig& config);

}  // namespace busrl

#endif  // BUSRL_CONFIG_HPP_
