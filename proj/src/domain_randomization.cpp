#include "busrl/domain_randomization.hpp"

#include <algorithm>
#include <cmath>

#include "busrl/errors.hpp"

namespace busrl {

void DRConfig::validate() const {
  if (demand_levels.empty()) throw ConfigError("dr.demand_levels must not be empty");
  for (double l : demand_levels)
    if (!(l >= 0.0 && l <= 2.0)) throw ConfigError("dr.demand_levels entries must lie in [0,2]");
  if (!(demand_noise_sigma >= 0.0) || !std::isfinite(demand_noise_sigma))
    throw ConfigError("dr.demand_noise_sigma must be finite and >= 0");
  if (min_delay < 0 || min_delay > max_delay)
    throw ConfigError("dr delays need 0 <= min_delay <= max_delay");
}

DRDraw draw_episode(const DRConfig& cfg, Rng& rng) {
  if (!cfg.enabled) return DRDraw::identity();
  cfg.validate();
  const auto [lo, hi] = std::minmax_element(cfg.demand_levels.begin(), cfg.demand_levels.end());
  const int pick = rng.uniform_int(0, static_cast<int>(cfg.demand_levels.size()) - 1);
  double level = cfg.demand_levels[static_cast<std::size_t>(pick)];
  if (cfg.demand_noise_sigma > 0.0) level += rng.normal(0.0, cfg.demand_noise_sigma);
  DRDraw draw;
  draw.enabled = true;
  draw.demand_multiplier = std::clamp(level, *lo, *hi);
  draw.min_delay = cfg.min_delay;
  draw.max_delay = cfg.max_delay;
  return draw;
}

int departure_delay(const DRDraw& draw, Rng& rng) {
  if (!draw.enabled || draw.max_delay == 0) return 0;
  return rng.uniform_int(draw.min_delay, draw.max_delay);
}

}  // namespace busrl
