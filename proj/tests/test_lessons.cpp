#include <fstream>
#include <sstream>

#include "busrl/environment.hpp"
#include "busrl/errors.hpp"
#include "busrl/lessons.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace busrl;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE_MESSAGE(in.good(), "missing " << path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// The first four catalog columns, in the golden's layout.
std::string catalog_columns() {
  std::istringstream in(catalog_table());
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind('\t')) + '\n';
  return out;
}

ActionMask mask_of(std::initializer_list<int> actions) {
  ActionMask m;
  for (int a : actions) m.set(static_cast<std::size_t>(a));
  return m;
}

}  // namespace

TEST_CASE("action-space catalog matches the transcribed table row for row") {
  CHECK(catalog_columns() == read_file(BUSRL_GOLDEN_DIR "/action_space.tsv"));
}

TEST_CASE("mask_for examples") {
  CHECK(mask_for(6) == mask_of({0, 1, 2, 3, 4, 13}));
  CHECK(mask_for(1) == mask_of({0, 12}));
  CHECK(mask_for(14) == mask_of({0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 13}));
  CHECK(mask_for(0) == mask_of({0, 12, 13}));
  CHECK(mask_for(9) == mask_of({0, 1, 2, 3, 4, 5, 6, 7, 8}));
  for (int s = 0; s < kNumActionSpaces; ++s) CHECK(mask_for(s).test(0));
  CHECK_THROWS_AS(mask_for(-1), ConfigError);
  CHECK_THROWS_AS(mask_for(15), ConfigError);
}

TEST_CASE("lesson ranges are enforced") {
  CHECK_NOTHROW(Lesson{14, 4, 1}.validate());
  CHECK_THROWS_AS((Lesson{0, 5, 3}.validate()), ConfigError);
  CHECK_THROWS_AS((Lesson{0, 0, 0}.validate()), ConfigError);
  CHECK_THROWS_AS((Lesson{0, 0, 11}.validate()), ConfigError);
  CHECK_THROWS_AS(EnvLesson::from_lesson(Lesson{15, 0, 1}), ConfigError);
}

TEST_CASE("bunching initialization equals the straight transcription") {
  for (int beta : {1, 3, 5, 10}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      std::mt19937_64 engine(seed);
      CHECK(initialize_buses(beta, 10, 14, rng) == oracle::bunching_placement(beta, 10, 14, engine));
    }
  }
}

TEST_CASE("reset places buses with the placement stream") {
  BusEnv env(EnvConfig{});
  EnvLesson lesson = EnvLesson::no_curriculum();
  lesson.bunching = 1;
  env.reset(lesson, DRDraw::identity(), 42);
  // The placement stream is derived from the reset seed with tag 6.
  std::mt19937_64 engine(derive_seed(42, 6));
  const std::vector<int> expected = oracle::bunching_placement(1, 10, 14, engine);
  for (int i = 0; i < 14; ++i) CHECK(env.state().buses[static_cast<std::size_t>(i)].station == expected[static_cast<std::size_t>(i)]);
}

TEST_CASE("degenerate one-station loop puts every bus at 0") {
  Rng rng(3);
  for (int beta : {1, 10}) {
    const auto s = initialize_buses(beta, 1, 14, rng);
    for (int x : s) CHECK(x == 0);
  }
}

TEST_CASE("bunching strength 10 spreads buses wider than strength 1") {
  Rng rng(7);
  std::vector<double> spread1, spread10, distinct1, distinct10;
  for (int k = 0; k < 1000; ++k) {
    const auto a = initialize_buses(1, 10, 14, rng);
    const auto b = initialize_buses(10, 10, 14, rng);
    for (int x : a) REQUIRE((x >= 0 && x < 10));
    for (int x : b) REQUIRE((x >= 0 && x < 10));
    spread1.push_back(oracle::circular_spread(a, 10));
    spread10.push_back(oracle::circular_spread(b, 10));
    distinct1.push_back(oracle::distinct(a));
    distinct10.push_back(oracle::distinct(b));
  }
  // One-sided p < 0.01 needs t > 2.33.
  CHECK(oracle::welch_t(spread10, spread1) > 2.33);
  CHECK(oracle::welch_t(distinct10, distinct1) > 2.33);
}

TEST_CASE("perturbation trigger rate is 0.01 per tick") {
  Rng rng(11);
  int triggers = 0;
  const int ticks = 100000;
  for (int t = 0; t < ticks; ++t)
    if (draw_perturbation(3, rng)) ++triggers;
  const double mean = ticks * kPerturbationProbability;
  const double sd = std::sqrt(ticks * kPerturbationProbability * (1 - kPerturbationProbability));
  CHECK(std::abs(triggers - mean) < 3 * sd);
}

TEST_CASE("perturbation stream consumption does not depend on candidates") {
  Rng a(5), b(5);
  for (int t = 0; t < 5000; ++t) {
    draw_perturbation(0, a);
    draw_perturbation(4, b);
  }
  CHECK(a == b);
}

namespace {

// Always-hold-0 episode with the adversary at `alpha`, or switched off.
SimState run_hold0(std::optional<int> alpha, std::uint64_t seed) {
  EnvConfig cfg;
  cfg.episode_length = 1200;
  cfg.adversary_enabled = alpha.has_value();
  BusEnv env(cfg);
  EnvLesson lesson = EnvLesson::no_curriculum();
  lesson.perturbation = alpha.value_or(0);
  env.reset(lesson, DRDraw::identity(), seed);
  while (auto ev = env.step_until_decision()) env.apply_action(*ev, 0);
  return env.state();
}

}  // namespace

TEST_CASE("alpha 0 is bit-identical to the adversary switched off") {
  const SimState zero = run_hold0(0, 9);
  const SimState off = run_hold0(std::nullopt, 9);
  CHECK(zero.perturbations_triggered > 0);
  CHECK(off.perturbations_triggered == 0);
  CHECK(zero.buses == off.buses);
  CHECK(zero.passengers == off.passengers);
  CHECK(zero.queues == off.queues);
  CHECK(zero.counters == off.counters);
  // A non-zero strength triggers on the same ticks but changes the trajectory.
  const SimState four = run_hold0(4, 9);
  CHECK(four.perturbations_triggered == zero.perturbations_triggered);
  CHECK_FALSE(four.buses == zero.buses);
}

TEST_CASE("a single perturbation at alpha 2 delays arrival by exactly 20 s") {
  EnvConfig cfg;
  cfg.num_buses = 1;
  cfg.arrival_rate = 0.0;
  cfg.episode_length = 200;
  auto arrival_tick = [&](int alpha, bool force) {
    BusEnv env(cfg);
    EnvLesson lesson = EnvLesson::no_curriculum();
    lesson.perturbation = alpha;
    env.reset(lesson, DRDraw::identity(), 1);
    auto ev = env.step_until_decision();
    REQUIRE(ev);
    env.apply_action(*ev, 0);
    env.advance_tick();
    if (force) {
      // Inject one trigger by hand, as the adversary would.
      Bus& bus = env.mutable_state().buses[0];
      bus.remaining_ticks += alpha * cfg.perturbation_unit;
      bus.travel_ticks += alpha * cfg.perturbation_unit;
    }
    while (env.state().buses[0].phase == BusPhase::kDriving) env.advance_tick();
    return env.state().tick;
  };
  const int base = arrival_tick(2, false);
  CHECK(arrival_tick(2, true) - base == 20);
}
