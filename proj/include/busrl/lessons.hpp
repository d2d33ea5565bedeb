#ifndef BUSRL_LESSONS_HPP_
#define BUSRL_LESSONS_HPP_

#include <array>
#include <bitset>
#include <optional>
#include <string>
#include <vector>

#include "busrl/rng.hpp"

namespace busrl {

// Discrete actions: 0..11 hold for a*10 s, 12 skip next stop, 13 turn around.
inline constexpr int kNumActions = 14;
inline constexpr int kNumHoldActions = 12;
inline constexpr int kSkipAction = 12;
inline constexpr int kTurnAction = 13;

using ActionMask = std::bitset<kNumActions>;

inline constexpr int kNumActionSpaces = 15;
inline constexpr int kMaxPerturbation = 4;
inline constexpr int kMinBunching = 1;
inline constexpr int kMaxBunching = 10;

// One curriculum stage: action-space index, perturbation strength and
// bunching strength.
struct Lesson {
  int action_space = 0;  // S, 0..14
  int perturbation = 0;  // alpha, 0..4
  int bunching = 10;     // beta, 1..10

  void validate() const;
  friend bool operator==(const Lesson&, const Lesson&) = default;
};

std::string to_string(const Lesson& lesson);

struct ActionSpaceEntry {
  int max_hold_seconds;  // 0, 40, 80 or 120
  bool skipping;
  bool turning;
};

// Row-for-row copy of the 15-entry action-space table.
const std::array<ActionSpaceEntry, kNumActionSpaces>& action_space_catalog();

// Legal actions for catalog entry S. Throws ConfigError when S is out of range.
ActionMask mask_for(int action_space);

// Tab-separated dump of the catalog ("S, holding, skipping, turning, actions").
std::string catalog_table();

// What the environment actually consumes: a legal-action set plus the
// adversary and initialization knobs. `bunching` empty means the standard
// initialization (all buses staged at station 0, released one headway apart).
struct EnvLesson {
  ActionMask actions;
  int perturbation = 0;
  std::optional<int> bunching;

  static EnvLesson no_curriculum();
  static EnvLesson from_lesson(const Lesson& lesson);

  void validate() const;
  friend bool operator==(const EnvLesson&, const EnvLesson&) = default;
};

// Bunching-strength initialization. Picks `bunching` centre stations with
// replacement, then for each bus picks one centre uniformly, samples
// N(centre, 2.5) and rounds to the nearest station, wrapping on the loop.
inline constexpr double kBunchingStddev = 2.5;
std::vector<int> initialize_buses(int bunching, int num_stations, int num_buses, Rng& rng);

// Per-tick perturbation adversary.
inline constexpr double kPerturbationProbability = 0.01;

// Draws one tick of the adversary. The trigger and the target choice consume
// the stream identically for every strength, so strength 0 reproduces a run
// with the adversary switched off. Returns the index into `num_candidates`
// of the bus to delay, if any.
std::optional<int> draw_perturbation(int num_candidates, Rng& rng);

}  // namespace busrl

#endif  // BUSRL_LESSONS_HPP_
