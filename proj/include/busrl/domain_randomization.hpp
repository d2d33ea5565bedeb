#ifndef BUSRL_DOMAIN_RANDOMIZATION_HPP_
#define BUSRL_DOMAIN_RANDOMIZATION_HPP_

#include <vector>

#include "busrl/rng.hpp"

namespace busrl {

// Episode-level demand randomization plus per-departure delays.
struct DRConfig {
  bool enabled = true;
  std::vector<double> demand_levels{1.25, 1.0, 0.75};
  double demand_noise_sigma = 0.1;
  int min_delay = 0;   // seconds
  int max_delay = 30;  // seconds

  void validate() const;
};

struct DRDraw {
  bool enabled = false;
  double demand_multiplier = 1.0;
  int min_delay = 0;
  int max_delay = 0;

  static DRDraw identity() { return {}; }
  friend bool operator==(const DRDraw&, const DRDraw&) = default;
};

// Picks a demand level uniformly, adds Gaussian noise and clips into
// [min(L), max(L)]. A disabled config yields the identity draw and consumes
// nothing from `rng`.
DRDraw draw_episode(const DRConfig& cfg, Rng& rng);

// Uniform integer delay in [min_delay, max_delay] seconds; 0 for the identity
// draw (no rng consumption).
int departure_delay(const DRDraw& draw, Rng& rng);

}  // namespace busrl

#endif  // BUSRL_DOMAIN_RANDOMIZATION_HPP_
