#include "busrl/lessons.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "busrl/errors.hpp"

namespace busrl {

namespace {

constexpr std::array<ActionSpaceEntry, kNumActionSpaces> kCatalog{{
    {0, true, true},
    {0, true, false},
    {0, false, true},
    {40, true, false},
    {40, true, true},
    {40, false, false},
    {40, false, true},
    {80, true, false},
    {80, true, true},
    {80, false, false},
    {80, false, true},
    {120, true, false},
    {120, true, true},
    {120, false, false},
    {120, false, true},
}};

}  // namespace

void Lesson::validate() const {
  if (action_space < 0 || action_space >= kNumActionSpaces)
    throw ConfigError("lesson action space S=" + std::to_string(action_space) + " outside [0,14]");
  if (perturbation < 0 || perturbation > kMaxPerturbation)
    throw ConfigError("lesson perturbation strength " + std::to_string(perturbation) +
                      " outside [0,4]");
  if (bunching < kMinBunching || bunching > kMaxBunching)
    throw ConfigError("lesson bunching strength " + std::to_string(bunching) + " outside [1,10]");
}

std::string to_string(const Lesson& lesson) {
  return "(S=" + std::to_string(lesson.action_space) + ", alpha=" +
         std::to_string(lesson.perturbation) + ", beta=" + std::to_string(lesson.bunching) + ")";
}

const std::array<ActionSpaceEntry, kNumActionSpaces>& action_space_catalog() { return kCatalog; }

ActionMask mask_for(int action_space) {
  if (action_space < 0 || action_space >= kNumActionSpaces)
    throw ConfigError("action space index " + std::to_string(action_space) + " outside [0,14]");
  const ActionSpaceEntry& entry = kCatalog[static_cast<std::size_t>(action_space)];
  ActionMask mask;
  // Holding in 10 s quanta; the "0 holding" rows still allow departing now.
  const int last_hold = entry.max_hold_seconds == 120 ? kNumHoldActions - 1 : entry.max_hold_seconds / 10;
  for (int a = 0; a <= last_hold; ++a) mask.set(static_cast<std::size_t>(a));
  mask.set(kSkipAction, entry.skipping);
  mask.set(kTurnAction, entry.turning);
  return mask;
}

std::string catalog_table() {
  std::ostringstream out;
  out << "S\tholding\tskipping\tturning\tactions\n";
  for (int s = 0; s < kNumActionSpaces; ++s) {
    const auto& e = kCatalog[static_cast<std::size_t>(s)];
    out << s << '\t' << (e.max_hold_seconds == 0 ? "0" : "0-" + std::to_string(e.max_hold_seconds))
        << '\t' << (e.skipping ? "Yes" : "No") << '\t' << (e.turning ? "Yes" : "No") << '\t';
    const ActionMask mask = mask_for(s);
    bool first = true;
    for (int a = 0; a < kNumActions; ++a) {
      if (!mask.test(static_cast<std::size_t>(a))) continue;
      out << (first ? "" : ",") << a;
      first = false;
    }
    out << '\n';
  }
  return out.str();
}

EnvLesson EnvLesson::no_curriculum() {
  EnvLesson lesson;
  lesson.actions.set();
  return lesson;
}

EnvLesson EnvLesson::from_lesson(const Lesson& lesson) {
  lesson.validate();
  EnvLesson env;
  env.actions = mask_for(lesson.action_space);
  env.perturbation = lesson.perturbation;
  env.bunching = lesson.bunching;
  return env;
}

void EnvLesson::validate() const {
  if (actions.none()) throw ConfigError("lesson allows no actions");
  if (perturbation < 0 || perturbation > kMaxPerturbation)
    throw ConfigError("perturbation strength " + std::to_string(perturbation) + " outside [0,4]");
  if (bunching && (*bunching < kMinBunching || *bunching > kMaxBunching))
    throw ConfigError("bunching strength " + std::to_string(*bunching) + " outside [1,10]");
}

std::vector<int> initialize_buses(int bunching, int num_stations, int num_buses, Rng& rng) {
  if (bunching < kMinBunching || bunching > kMaxBunching)
    throw ConfigError("bunching strength " + std::to_string(bunching) + " outside [1,10]");
  if (num_stations < 1) throw ConfigError("need at least one station");

  std::vector<int> centres(static_cast<std::size_t>(bunching));
  for (int& c : centres) c = rng.uniform_int(0, num_stations - 1);

  std::vector<int> stations(static_cast<std::size_t>(num_buses));
  for (int& s : stations) {
    const int centre = centres[static_cast<std::size_t>(rng.uniform_int(0, bunching - 1))];
    const long sampled = std::lround(rng.normal(static_cast<double>(centre), kBunchingStddev));
    long wrapped = sampled % num_stations;
    if (wrapped < 0) wrapped += num_stations;
    s = static_cast<int>(wrapped);
  }
  return stations;
}

std::optional<int> draw_perturbation(int num_candidates, Rng& rng) {
  if (!rng.bernoulli(kPerturbationProbability)) return std::nullopt;
  // The target draw happens on every trigger, even with no candidates.
  const double u = rng.uniform();
  if (num_candidates <= 0) return std::nullopt;
  return std::min(num_candidates - 1, static_cast<int>(u * num_candidates));
}

}  // namespace busrl
