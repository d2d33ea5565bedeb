#include <cmath>
#include <set>

#include "busrl/domain_randomization.hpp"
#include "busrl/environment.hpp"
#include "busrl/errors.hpp"
#include "doctest.h"

using namespace busrl;

TEST_CASE("zero noise yields exactly the listed levels") {
  DRConfig cfg;
  cfg.demand_noise_sigma = 0.0;
  Rng rng(1);
  std::set<double> seen;
  for (int i = 0; i < 3000; ++i) seen.insert(draw_episode(cfg, rng).demand_multiplier);
  CHECK(seen == std::set<double>{0.75, 1.0, 1.25});
}

TEST_CASE("disabled config is the identity and consumes nothing") {
  DRConfig cfg;
  cfg.enabled = false;
  Rng rng(2), untouched(2);
  const DRDraw d = draw_episode(cfg, rng);
  CHECK(d == DRDraw::identity());
  CHECK(d.demand_multiplier == 1.0);
  for (int i = 0; i < 100; ++i) CHECK(departure_delay(d, rng) == 0);
  CHECK(rng == untouched);
}

TEST_CASE("wide noise is clipped into the level range with mass at both ends") {
  DRConfig cfg;
  cfg.demand_noise_sigma = 0.5;
  Rng rng(3);
  int low = 0, high = 0;
  for (int i = 0; i < 10000; ++i) {
    const double x = draw_episode(cfg, rng).demand_multiplier;
    REQUIRE((x >= 0.75 && x <= 1.25));
    low += x == 0.75;
    high += x == 1.25;
  }
  CHECK(low > 1000);
  CHECK(high > 1000);
}

TEST_CASE("delay mean is (min + max) / 2") {
  DRConfig cfg;
  Rng rng(4);
  const DRDraw d = draw_episode(cfg, rng);
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const int x = departure_delay(d, rng);
    REQUIRE((x >= 0 && x <= 30));
    sum += x;
  }
  const double sd = std::sqrt((31.0 * 31.0 - 1.0) / 12.0 / n);
  CHECK(std::abs(sum / n - 15.0) < 3 * sd);
}

TEST_CASE("min = max = 0 always gives 0") {
  DRConfig cfg;
  cfg.max_delay = 0;
  Rng rng(5);
  const DRDraw d = draw_episode(cfg, rng);
  for (int i = 0; i < 100; ++i) CHECK(departure_delay(d, rng) == 0);
}

TEST_CASE("config validation") {
  DRConfig cfg;
  cfg.min_delay = 5;
  cfg.max_delay = 2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  DRConfig bad_levels;
  bad_levels.demand_levels = {2.5};
  CHECK_THROWS_AS(bad_levels.validate(), ConfigError);
  DRConfig empty;
  empty.demand_levels = {};
  CHECK_THROWS_AS(empty.validate(), ConfigError);
}

TEST_CASE("delays never shorten travel") {
  EnvConfig cfg;
  cfg.num_buses = 1;
  cfg.arrival_rate = 0.0;
  cfg.episode_length = 2000;
  DRConfig dr;
  Rng rng(6);
  BusEnv env(cfg);
  env.reset(EnvLesson::no_curriculum(), draw_episode(dr, rng), 6);
  int last_departure = -1;
  while (auto ev = env.step_until_decision()) {
    if (last_departure >= 0) CHECK(env.state().tick - last_departure >= cfg.segment_ticks());
    env.apply_action(*ev, 0);
    last_departure = env.state().tick;
  }
}
