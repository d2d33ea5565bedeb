// Tick-level invariant checker for BusEnv episodes: capacity, conservation,
// single location per passenger, status-transition legality and monotone
// counters. Cost per check is proportional to the live passengers only.
#ifndef BUSRL_TESTS_INVARIANTS_HPP_
#define BUSRL_TESTS_INVARIANTS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "busrl/environment.hpp"

namespace check {

class InvariantMonitor {
 public:
  explicit InvariantMonitor(const busrl::BusEnv& env) : env_(env) {}

  // Returns an empty string when every invariant holds, else the first violation.
  std::string observe() {
    using busrl::PassengerStatus;
    const busrl::SimState& s = env_.state();
    ++epoch_;
    const std::size_t total = s.passengers.size();
    seen_.resize(total, 0);
    prev_.resize(total, static_cast<std::uint8_t>(PassengerStatus::kWaiting));

    std::size_t live = 0;
    auto visit = [&](int pid, bool onboard) -> std::string {
      const auto id = static_cast<std::size_t>(pid);
      if (id >= total) return "unknown passenger id";
      if (seen_[id] == epoch_) return "passenger " + std::to_string(pid) + " in two places";
      seen_[id] = epoch_;
      ++live;
      const PassengerStatus st = s.passengers[id].status;
      const bool ok = onboard ? st == PassengerStatus::kOnBus
                              : (st == PassengerStatus::kWaiting || st == PassengerStatus::kAlightedWaiting);
      if (!ok) return "status/location mismatch for passenger " + std::to_string(pid);
      return {};
    };
    for (const auto& q : s.queues)
      for (int pid : q)
        if (auto e = visit(pid, false); !e.empty()) return e;
    for (const auto& b : s.buses) {
      if (static_cast<int>(b.onboard.size()) > env_.config().bus_capacity) return "capacity exceeded";
      if (!(b.position >= 0.0 && b.position < env_.config().loop_length())) return "bus position off the loop";
      for (int pid : b.onboard)
        if (auto e = visit(pid, true); !e.empty()) return e;
    }

    // Transitions for everything live now or live at the previous check.
    auto legal = [](std::uint8_t from, std::uint8_t to) {
      if (from == to) return true;
      return (from == 0 && to == 1) || (from == 1 && to == 2) || (from == 1 && to == 3) ||
             (from == 2 && to == 1) || (from == 0 && to == 4);
    };
    std::vector<int> next_live;
    next_live.reserve(live);
    for (int pid : live_) {
      const auto id = static_cast<std::size_t>(pid);
      const auto now = static_cast<std::uint8_t>(s.passengers[id].status);
      if (!legal(prev_[id], now))
        return "illegal transition " + std::to_string(prev_[id]) + "->" + std::to_string(now);
      if (seen_[id] != epoch_) {
        if (now != 3 && now != 4) return "passenger vanished with non-terminal status";
        ++terminal_;
      }
      prev_[id] = now;
    }
    for (std::size_t id = known_; id < total; ++id) {
      const auto now = static_cast<std::uint8_t>(s.passengers[id].status);
      if (!legal(0, now)) return "new passenger with illegal status";
      if (seen_[id] != epoch_) {
        if (now != 4 && now != 3) return "new passenger not placed anywhere";
        ++terminal_;
      }
      prev_[id] = now;
    }
    known_ = total;
    live_.clear();
    for (const auto& q : s.queues) live_.insert(live_.end(), q.begin(), q.end());
    for (const auto& b : s.buses) live_.insert(live_.end(), b.onboard.begin(), b.onboard.end());

    if (live + terminal_ != total) return "conservation violated";

    const busrl::Counters& c = s.counters;
    if (c.wait_ticks < last_.wait_ticks || c.onbus_ticks < last_.onbus_ticks ||
        c.waited_passengers < last_.waited_passengers || c.boarded_passengers < last_.boarded_passengers)
      return "counter decreased";
    last_ = c;
    ++checks_;
    return {};
  }

  // Full O(P) cross-check against the library's own status census.
  std::string final_check() const {
    const busrl::StatusCounts sc = env_.status_counts();
    if (sc.waiting + sc.onbus + sc.arrived + sc.left != sc.total) return "census does not add up";
    if (static_cast<std::size_t>(sc.arrived + sc.left) != terminal_) return "terminal count mismatch";
    return {};
  }

  std::int64_t checks() const { return checks_; }

 private:
  const busrl::BusEnv& env_;
  std::uint32_t epoch_ = 0;
  std::vector<std::uint32_t> seen_;
  std::vector<std::uint8_t> prev_;
  std::vector<int> live_;
  std::size_t known_ = 0;
  std::size_t terminal_ = 0;
  busrl::Counters last_;
  std::int64_t checks_ = 0;
};

}  // namespace check

#endif  // BUSRL_TESTS_INVARIANTS_HPP_
