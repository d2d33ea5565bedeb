#ifndef BUSRL_ENVIRONMENT_HPP_
#define BUSRL_ENVIRONMENT_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "busrl/domain_randomization.hpp"
#include "busrl/lessons.hpp"
#include "busrl/rng.hpp"

namespace busrl {

struct EnvConfig {
  int num_stations = 10;
  int num_buses = 14;
  int bus_capacity = 60;
  double station_spacing = 1000.0;    // metres
  double bus_speed = 1000.0 / 60.0;   // metres per second (60 s between stops)
  // Mean departing load at the busiest stop is ~45 (75% of C) at demand
  // 1.25 under a hold-0 policy; see tools/calibrate.cpp.
  double arrival_rate = 0.28;         // passengers / second / station
  double board_time = 3.0;            // seconds per passenger
  double alight_time = 1.8;           // seconds per passenger
  int headway = 43;                   // seconds; 60 * m / n rounded
  int episode_length = 3600;          // ticks (1 tick = 1 s)
  double reward_weight_wait = -1.0;
  double reward_weight_onbus = -1.0;
  double long_wait_leave_prob = 0.5;
  int hold_quantum = 10;              // seconds per hold action step
  int perturbation_unit = 10;         // seconds added per unit of perturbation strength
  bool adversary_enabled = true;      // false skips the adversary draw entirely
  std::uint64_t seed = 0;

  void validate() const;
  int segment_ticks() const;
  double loop_length() const { return station_spacing * num_stations; }
  // Headway implied by the loop travel time and fleet size, in whole seconds.
  int default_headway() const;
};

enum class PassengerStatus : std::uint8_t {
  kWaiting = 0,
  kOnBus = 1,
  kAlightedWaiting = 2,
  kArrived = 3,
  kLeftAfterLongWait = 4,
};

struct Passenger {
  int id = 0;
  int origin = 0;
  int destination = 0;
  int arrival_tick = 0;
  std::optional<int> board_tick;
  std::optional<int> alight_tick;
  PassengerStatus status = PassengerStatus::kWaiting;

  friend bool operator==(const Passenger&, const Passenger&) = default;
};

enum class BusPhase : std::uint8_t { kDriving, kDwelling, kHeld, kAwaitingDecision };

struct Bus {
  int id = 0;
  double position = 0.0;  // metres along the loop, [0, loop_length)
  int station = 0;        // station currently served, or last departed
  int next_stop = 1;
  BusPhase phase = BusPhase::kHeld;
  int remaining_ticks = 0;
  bool staged = false;    // held before its initial release
  std::vector<int> onboard;

  // Driving bookkeeping.
  double origin_position = 0.0;
  double travel_distance = 0.0;
  int travel_ticks = 0;
  int elapsed_ticks = 0;

  friend bool operator==(const Bus&, const Bus&) = default;
};

// Cumulative episode counters behind the reward.
struct Counters {
  std::int64_t wait_ticks = 0;       // T_w: +1 per waiting passenger per tick
  std::int64_t onbus_ticks = 0;      // T_b: +1 per onboard passenger per tick
  std::int64_t waited_passengers = 0;   // N_w: distinct passengers that ever waited
  std::int64_t boarded_passengers = 0;  // N_b: distinct passengers that ever boarded

  friend bool operator==(const Counters&, const Counters&) = default;
};

struct RngStreams {
  Rng arrivals;
  Rng boarding;
  Rng leaving;
  Rng perturbation;
  Rng delays;
  Rng placement;

  explicit RngStreams(std::uint64_t seed = 0);
  friend bool operator==(const RngStreams&, const RngStreams&) = default;
};

struct SimState {
  int tick = 0;
  std::vector<Bus> buses;
  std::vector<std::vector<int>> queues;  // passenger ids per station, FIFO
  std::vector<Passenger> passengers;     // indexed by id
  Counters counters;
  RngStreams rng;
  EnvLesson lesson;
  DRDraw dr;
  int perturbations_triggered = 0;

  friend bool operator==(const SimState&, const SimState&) = default;
};

struct DecisionEvent {
  int bus_id = 0;
  int station = 0;
  ActionMask mask;
  std::vector<double> observation;
};

struct StatusCounts {
  std::int64_t waiting = 0;  // statuses 0 and 2
  std::int64_t onbus = 0;
  std::int64_t arrived = 0;
  std::int64_t left = 0;
  std::int64_t total = 0;
};

struct RewardWeights {
  double wait = -1.0;
  double onbus = -1.0;
};

// R = w_w * dT_w / max(N_w, 1) + w_b * dT_b / max(N_b, 1).
double interval_reward(double wait_ticks, double waited, double onbus_ticks, double boarded,
                       RewardWeights weights);

// Reward for the interval between two decision points: waiting and on-bus
// time accrued in between, normalized by the cumulative passenger counts at
// the end of the interval.
double compute_reward(const Counters& before, const Counters& after, RewardWeights weights);

// Joint boarding / alighting for buses that reached `station` on the same tick.
// Alights riders destined here, then boards the queue FIFO; with several buses
// present each passenger picks uniformly among buses with room. Returns the
// dwell in seconds per bus: max(boarded * board_time, alighted * alight_time).
std::vector<double> board_and_alight(std::span<Bus* const> buses, int station,
                                     std::vector<int>& queue, std::vector<Passenger>& passengers,
                                     Counters& counters, int tick, const EnvConfig& config,
                                     Rng& rng);

class BusEnv {
 public:
  explicit BusEnv(EnvConfig config);

  void reset(const EnvLesson& lesson, const DRDraw& dr, std::uint64_t seed);

  // Advances one tick at a time until a bus is ready to depart (lowest id
  // first on ties) or the episode ends.
  std::optional<DecisionEvent> step_until_decision();

  // Applies `action` for the bus named in `event`. Throws ContractError when
  // the action is masked out.
  void apply_action(const DecisionEvent& event, int action);

  // One simulation second. Exposed for tick-level inspection.
  void advance_tick();
  std::optional<int> ready_bus() const;
  bool done() const { return state_.tick >= config_.episode_length; }

  ActionMask legal_actions(int bus_id) const;
  std::vector<double> observation(int bus_id) const;
  int observation_size() const;
  static int observation_size(int num_stations, int num_buses);

  StatusCounts status_counts() const;
  RewardWeights reward_weights() const {
    return {config_.reward_weight_wait, config_.reward_weight_onbus};
  }

  // One line-delimited JSON record (tick, bus positions, queue lengths, reward).
  std::string trace_record(double reward) const;

  const EnvConfig& config() const { return config_; }
  const SimState& state() const { return state_; }
  SimState& mutable_state() { return state_; }

 private:
  void generate_arrivals();
  void process_arrivals(std::vector<int>& arrived_bus_ids);
  void apply_long_wait_leaving();
  void depart(Bus& bus, int segments, double origin_position);
  double station_position(int station) const;

  EnvConfig config_;
  SimState state_;
};

}  // namespace busrl

#endif  // BUSRL_ENVIRONMENT_HPP_
