#include "busrl/environment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

#include "busrl/errors.hpp"

namespace busrl {

namespace {

bool is_waiting(PassengerStatus s) {
  return s == PassengerStatus::kWaiting || s == PassengerStatus::kAlightedWaiting;
}

int wrap_station(int s, int m) {
  const int r = s % m;
  return r < 0 ? r + m : r;
}

}  // namespace

void EnvConfig::validate() const {
  if (num_stations < 2) throw ConfigError("env.num_stations must be >= 2");
  if (num_buses < 1) throw ConfigError("env.num_buses must be >= 1");
  if (bus_capacity < 1) throw ConfigError("env.bus_capacity must be >= 1");
  if (!(station_spacing > 0.0)) throw ConfigError("env.station_spacing must be > 0");
  if (!(bus_speed > 0.0)) throw ConfigError("env.bus_speed must be > 0");
  if (!(arrival_rate >= 0.0) || !std::isfinite(arrival_rate))
    throw ConfigError("env.arrival_rate must be finite and >= 0");
  if (!(board_time > 0.0) || !(alight_time > 0.0))
    throw ConfigError("env.board_time and env.alight_time must be > 0");
  if (headway < 1) throw ConfigError("env.headway must be >= 1");
  if (episode_length < 1) throw ConfigError("env.episode_length must be >= 1");
  if (reward_weight_wait > 0.0 || reward_weight_onbus > 0.0)
    throw ConfigError("env reward weights must be <= 0");
  if (!(long_wait_leave_prob >= 0.0 && long_wait_leave_prob <= 1.0))
    throw ConfigError("env.long_wait_leave_prob must lie in [0,1]");
  if (hold_quantum < 1 || perturbation_unit < 1)
    throw ConfigError("env.hold_quantum and env.perturbation_unit must be >= 1");
}

int EnvConfig::segment_ticks() const {
  return std::max(1, static_cast<int>(std::lround(station_spacing / bus_speed)));
}

int EnvConfig::default_headway() const {
  return std::max(1, static_cast<int>(std::lround(static_cast<double>(segment_ticks()) *
                                                  num_stations / num_buses)));
}

RngStreams::RngStreams(std::uint64_t seed)
    : arrivals(derive_seed(seed, 1)),
      boarding(derive_seed(seed, 2)),
      leaving(derive_seed(seed, 3)),
      perturbation(derive_seed(seed, 4)),
      delays(derive_seed(seed, 5)),
      placement(derive_seed(seed, 6)) {}

double interval_reward(double wait_ticks, double waited, double onbus_ticks, double boarded,
                       RewardWeights weights) {
  return weights.wait * wait_ticks / std::max(waited, 1.0) +
         weights.onbus * onbus_ticks / std::max(boarded, 1.0);
}

double compute_reward(const Counters& before, const Counters& after, RewardWeights weights) {
  return interval_reward(static_cast<double>(after.wait_ticks - before.wait_ticks),
                         static_cast<double>(after.waited_passengers),
                         static_cast<double>(after.onbus_ticks - before.onbus_ticks),
                         static_cast<double>(after.boarded_passengers), weights);
}

std::vector<double> board_and_alight(std::span<Bus* const> buses, int station,
                                     std::vector<int>& queue, std::vector<Passenger>& passengers,
                                     Counters& counters, int tick, const EnvConfig& config,
                                     Rng& rng) {
  std::vector<int> alighted(buses.size(), 0);
  std::vector<int> boarded(buses.size(), 0);

  for (std::size_t b = 0; b < buses.size(); ++b) {
    auto& onboard = buses[b]->onboard;
    auto keep = onboard.begin();
    for (int pid : onboard) {
      Passenger& p = passengers[static_cast<std::size_t>(pid)];
      if (p.destination == station) {
        p.status = PassengerStatus::kArrived;
        p.alight_tick = tick;
        ++alighted[b];
      } else {
        *keep++ = pid;
      }
    }
    onboard.erase(keep, onboard.end());
  }

  std::vector<std::size_t> with_room;
  with_room.reserve(buses.size());
  auto remaining = queue.begin();
  for (int pid : queue) {
    with_room.clear();
    for (std::size_t b = 0; b < buses.size(); ++b)
      if (static_cast<int>(buses[b]->onboard.size()) < config.bus_capacity) with_room.push_back(b);
    if (with_room.empty()) {
      *remaining++ = pid;
      continue;
    }
    const std::size_t pick =
        with_room.size() == 1
            ? with_room.front()
            : with_room[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(with_room.size()) - 1))];
    Passenger& p = passengers[static_cast<std::size_t>(pid)];
    if (!p.board_tick) ++counters.boarded_passengers;
    p.status = PassengerStatus::kOnBus;
    p.board_tick = tick;
    buses[pick]->onboard.push_back(pid);
    ++boarded[pick];
  }
  queue.erase(remaining, queue.end());

  std::vector<double> dwell(buses.size());
  for (std::size_t b = 0; b < buses.size(); ++b)
    dwell[b] = std::max(boarded[b] * config.board_time, alighted[b] * config.alight_time);
  return dwell;
}

BusEnv::BusEnv(EnvConfig config) : config_(std::move(config)) { config_.validate(); }

double BusEnv::station_position(int station) const {
  return config_.station_spacing * wrap_station(station, config_.num_stations);
}

void BusEnv::reset(const EnvLesson& lesson, const DRDraw& dr, std::uint64_t seed) {
  lesson.validate();
  const int m = config_.num_stations;
  const int n = config_.num_buses;

  state_ = SimState{};
  state_.rng = RngStreams(seed);
  state_.lesson = lesson;
  state_.dr = dr;
  state_.queues.assign(static_cast<std::size_t>(m), {});
  state_.buses.resize(static_cast<std::size_t>(n));

  std::vector<int> starts(static_cast<std::size_t>(n), 0);
  if (lesson.bunching) starts = initialize_buses(*lesson.bunching, m, n, state_.rng.placement);

  std::vector<int> arriving;
  for (int i = 0; i < n; ++i) {
    Bus& bus = state_.buses[static_cast<std::size_t>(i)];
    bus.id = i;
    bus.station = starts[static_cast<std::size_t>(i)];
    bus.next_stop = wrap_station(bus.station + 1, m);
    bus.position = station_position(bus.station);
    bus.phase = BusPhase::kHeld;
    bus.staged = true;
    // Standard initialization releases the fleet one headway apart.
    bus.remaining_ticks = lesson.bunching ? 0 : i * config_.headway;
    if (bus.remaining_ticks == 0) arriving.push_back(i);
  }
  process_arrivals(arriving);
}

void BusEnv::process_arrivals(std::vector<int>& arrived_bus_ids) {
  if (arrived_bus_ids.empty()) return;
  std::sort(arrived_bus_ids.begin(), arrived_bus_ids.end());
  std::vector<int> stations;
  for (int id : arrived_bus_ids) stations.push_back(state_.buses[static_cast<std::size_t>(id)].station);
  std::vector<int> unique_stations = stations;
  std::sort(unique_stations.begin(), unique_stations.end());
  unique_stations.erase(std::unique(unique_stations.begin(), unique_stations.end()),
                        unique_stations.end());

  std::vector<Bus*> group;
  for (int s : unique_stations) {
    group.clear();
    for (std::size_t k = 0; k < arrived_bus_ids.size(); ++k)
      if (stations[k] == s) group.push_back(&state_.buses[static_cast<std::size_t>(arrived_bus_ids[k])]);
    const std::vector<double> dwell =
        board_and_alight(group, s, state_.queues[static_cast<std::size_t>(s)], state_.passengers,
                         state_.counters, state_.tick, config_, state_.rng.boarding);
    for (std::size_t b = 0; b < group.size(); ++b) {
      Bus& bus = *group[b];
      bus.staged = false;
      bus.position = station_position(s);
      const int ticks = static_cast<int>(std::ceil(dwell[b] - 1e-9));
      bus.remaining_ticks = ticks;
      bus.phase = ticks > 0 ? BusPhase::kDwelling : BusPhase::kAwaitingDecision;
    }
  }
}

void BusEnv::depart(Bus& bus, int segments, double origin_position) {
  bus.phase = BusPhase::kDriving;
  bus.origin_position = origin_position;
  bus.position = origin_position;
  bus.travel_distance = config_.station_spacing * segments;
  bus.travel_ticks = segments * config_.segment_ticks() +
                     departure_delay(state_.dr, state_.rng.delays);
  bus.elapsed_ticks = 0;
  bus.remaining_ticks = bus.travel_ticks;
}

void BusEnv::generate_arrivals() {
  const int m = config_.num_stations;
  const double rate = config_.arrival_rate * state_.dr.demand_multiplier;
  for (int s = 0; s < m; ++s) {
    const int count = state_.rng.arrivals.poisson(rate);
    // Destination drawn uniformly from the next floor((m - s) / 2) stops, at least one.
    const int reach = std::max(1, (m - s) / 2);
    for (int k = 0; k < count; ++k) {
      Passenger p;
      p.id = static_cast<int>(state_.passengers.size());
      p.origin = s;
      p.destination = wrap_station(s + state_.rng.arrivals.uniform_int(1, reach), m);
      p.arrival_tick = state_.tick;
      state_.queues[static_cast<std::size_t>(s)].push_back(p.id);
      state_.passengers.push_back(p);
      ++state_.counters.waited_passengers;
    }
  }
}

void BusEnv::apply_long_wait_leaving() {
  // Rolled once, on the first tick a status-0 passenger's wait exceeds the headway.
  const int threshold_arrival = state_.tick - config_.headway - 1;
  if (threshold_arrival < 0) return;
  for (auto& queue : state_.queues) {
    auto keep = queue.begin();
    for (int pid : queue) {
      Passenger& p = state_.passengers[static_cast<std::size_t>(pid)];
      if (p.status == PassengerStatus::kWaiting && p.arrival_tick == threshold_arrival &&
          state_.rng.leaving.bernoulli(config_.long_wait_leave_prob)) {
        p.status = PassengerStatus::kLeftAfterLongWait;
        continue;
      }
      *keep++ = pid;
    }
    queue.erase(keep, queue.end());
  }
}

void BusEnv::advance_tick() {
  if (done()) return;
  ++state_.tick;

  // Adversary: with probability 0.01 a random driving bus is slowed down.
  std::vector<int> driving;
  for (const Bus& bus : state_.buses)
    if (bus.phase == BusPhase::kDriving) driving.push_back(bus.id);
  const auto target = config_.adversary_enabled
                           ? draw_perturbation(static_cast<int>(driving.size()), state_.rng.perturbation)
                           : std::nullopt;
  if (target) {
    ++state_.perturbations_triggered;
    const int extra = state_.lesson.perturbation * config_.perturbation_unit;
    if (extra > 0) {
      Bus& bus = state_.buses[static_cast<std::size_t>(driving[static_cast<std::size_t>(*target)])];
      bus.remaining_ticks += extra;
      bus.travel_ticks += extra;
    }
  }

  const double loop = config_.loop_length();
  std::vector<int> arrived;
  for (Bus& bus : state_.buses) {
    switch (bus.phase) {
      case BusPhase::kDriving: {
        ++bus.elapsed_ticks;
        --bus.remaining_ticks;
        const double frac = std::min(1.0, static_cast<double>(bus.elapsed_ticks) / bus.travel_ticks);
        bus.position = std::fmod(bus.origin_position + bus.travel_distance * frac, loop);
        if (bus.remaining_ticks <= 0) {
          bus.station = bus.next_stop;
          bus.next_stop = wrap_station(bus.station + 1, config_.num_stations);
          bus.position = station_position(bus.station);
          arrived.push_back(bus.id);
        }
        break;
      }
      case BusPhase::kDwelling:
        if (--bus.remaining_ticks <= 0) {
          bus.remaining_ticks = 0;
          bus.phase = BusPhase::kAwaitingDecision;
        }
        break;
      case BusPhase::kHeld:
        if (--bus.remaining_ticks <= 0) {
          bus.remaining_ticks = 0;
          if (bus.staged)
            arrived.push_back(bus.id);
          else
            depart(bus, 1, station_position(bus.station));
        }
        break;
      case BusPhase::kAwaitingDecision:
        break;
    }
  }

  generate_arrivals();
  process_arrivals(arrived);
  apply_long_wait_leaving();

  std::int64_t waiting = 0;
  for (const auto& q : state_.queues) waiting += static_cast<std::int64_t>(q.size());
  std::int64_t onbus = 0;
  for (const Bus& bus : state_.buses) onbus += static_cast<std::int64_t>(bus.onboard.size());
  state_.counters.wait_ticks += waiting;
  state_.counters.onbus_ticks += onbus;
}

std::optional<int> BusEnv::ready_bus() const {
  for (const Bus& bus : state_.buses)
    if (bus.phase == BusPhase::kAwaitingDecision) return bus.id;
  return std::nullopt;
}

std::optional<DecisionEvent> BusEnv::step_until_decision() {
  while (!done()) {
    if (const auto id = ready_bus()) {
      DecisionEvent event;
      event.bus_id = *id;
      event.station = state_.buses[static_cast<std::size_t>(*id)].station;
      event.mask = legal_actions(*id);
      event.observation = observation(*id);
      return event;
    }
    advance_tick();
  }
  return std::nullopt;
}

ActionMask BusEnv::legal_actions(int bus_id) const {
  ActionMask mask = state_.lesson.actions;
  const int station = state_.buses.at(static_cast<std::size_t>(bus_id)).station;
  if (station > config_.num_stations / 2) mask.reset(kTurnAction);
  if (mask.none()) mask.set(0);
  return mask;
}

void BusEnv::apply_action(const DecisionEvent& event, int action) {
  if (action < 0 || action >= kNumActions)
    throw ContractError("action " + std::to_string(action) + " outside [0,13]");
  Bus& bus = state_.buses.at(static_cast<std::size_t>(event.bus_id));
  if (bus.phase != BusPhase::kAwaitingDecision)
    throw ContractError("bus " + std::to_string(event.bus_id) + " is not awaiting a decision");
  if (!legal_actions(event.bus_id).test(static_cast<std::size_t>(action)))
    throw ContractError("action " + std::to_string(action) + " is masked for bus " +
                        std::to_string(event.bus_id));

  const int m = config_.num_stations;
  const int j = bus.station;
  auto force_alight = [&](auto&& destined_for_arc) {
    auto& queue = state_.queues[static_cast<std::size_t>(j)];
    auto keep = bus.onboard.begin();
    for (int pid : bus.onboard) {
      Passenger& p = state_.passengers[static_cast<std::size_t>(pid)];
      if (destined_for_arc(p.destination)) {
        p.status = PassengerStatus::kAlightedWaiting;
        queue.push_back(pid);
      } else {
        *keep++ = pid;
      }
    }
    bus.onboard.erase(keep, bus.onboard.end());
  };

  if (action < kNumHoldActions) {
    const int hold = action * config_.hold_quantum;
    if (hold == 0) {
      depart(bus, 1, station_position(j));
    } else {
      bus.phase = BusPhase::kHeld;
      bus.remaining_ticks = hold;
    }
  } else if (action == kSkipAction) {
    const int skipped = wrap_station(j + 1, m);
    force_alight([&](int dest) { return dest == skipped; });
    bus.next_stop = wrap_station(j + 2, m);
    depart(bus, 2, station_position(j));
  } else {
    const int half = m / 2;
    force_alight([&](int dest) {
      const int ahead = wrap_station(dest - j, m);
      return ahead >= 1 && ahead <= half;
    });
    // Re-enter one segment before the mirror station, facing forward.
    const int mirror = wrap_station(j + half, m);
    bus.next_stop = mirror;
    depart(bus, 1, station_position(mirror - 1));
  }
}

int BusEnv::observation_size(int num_stations, int num_buses) {
  return 4 * num_buses + num_stations + 1;
}

int BusEnv::observation_size() const {
  return observation_size(config_.num_stations, config_.num_buses);
}

std::vector<double> BusEnv::observation(int bus_id) const {
  const int m = config_.num_stations;
  const int n = config_.num_buses;
  const double loop = config_.loop_length();
  const Bus& ego = state_.buses.at(static_cast<std::size_t>(bus_id));

  auto ahead_of_ego = [&](const Bus& b) {
    double d = std::fmod(b.position - ego.position, loop);
    if (d < 0) d += loop;
    return d;
  };
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (a == bus_id || b == bus_id) return a == bus_id && b != bus_id;
    return ahead_of_ego(state_.buses[static_cast<std::size_t>(a)]) <
           ahead_of_ego(state_.buses[static_cast<std::size_t>(b)]);
  });

  std::vector<double> rel(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k)
    rel[static_cast<std::size_t>(k)] = ahead_of_ego(state_.buses[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])]);

  std::vector<double> obs;
  obs.reserve(static_cast<std::size_t>(observation_size()));
  for (int k = 0; k < n; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    const double next = k + 1 < n ? rel[uk + 1] : rel[0] + loop;
    const double prev = k > 0 ? rel[uk - 1] : rel[static_cast<std::size_t>(n - 1)] - loop;
    const Bus& b = state_.buses[static_cast<std::size_t>(order[uk])];
    obs.push_back((next - rel[uk]) / loop);
    obs.push_back((rel[uk] - prev) / loop);
    obs.push_back(static_cast<double>(b.onboard.size()) / config_.bus_capacity);
    obs.push_back(rel[uk] / loop);
  }
  for (int k = 0; k < m; ++k)
    obs.push_back(static_cast<double>(state_.queues[static_cast<std::size_t>(wrap_station(ego.station + k, m))].size()) /
                  config_.bus_capacity);
  obs.push_back(static_cast<double>(state_.tick) / config_.episode_length);
  return obs;
}

StatusCounts BusEnv::status_counts() const {
  StatusCounts counts;
  for (const Passenger& p : state_.passengers) {
    ++counts.total;
    if (is_waiting(p.status))
      ++counts.waiting;
    else if (p.status == PassengerStatus::kOnBus)
      ++counts.onbus;
    else if (p.status == PassengerStatus::kArrived)
      ++counts.arrived;
    else
      ++counts.left;
  }
  return counts;
}

std::string BusEnv::trace_record(double reward) const {
  nlohmann::json rec;
  rec["tick"] = state_.tick;
  std::vector<double> positions;
  for (const Bus& b : state_.buses) positions.push_back(b.position);
  std::vector<std::size_t> queues;
  for (const auto& q : state_.queues) queues.push_back(q.size());
  rec["bus_positions"] = positions;
  rec["queue_lengths"] = queues;
  rec["reward"] = reward;
  return rec.dump();
}

}  // namespace busrl
