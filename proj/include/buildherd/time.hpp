#pragma once

#include <chrono>
#include <cstdint>

namespace buildherd {

// All instants are integer milliseconds since the unix epoch. Simulations
// start at the epoch itself (t = 0).
using Duration = std::chrono::milliseconds;
using Instant = std::chrono::sys_time<Duration>;

inline constexpr Instant from_ms(std::int64_t ms) { return Instant{Duration{ms}}; }
inline constexpr std::int64_t to_ms(Instant t) { return t.time_since_epoch().count(); }
inline constexpr std::int64_t to_ms(Duration d) { return d.count(); }

// Time source used by the pipeline executor and the server loop.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual Instant now() const = 0;
  virtual void sleep_for(Duration d) = 0;
};

class SystemClock final : public Clock {
 public:
  Instant now() const override;
  void sleep_for(Duration d) override;
};

// Manually advanced clock; sleep_for moves time forward instantly.
class SimulatedClock final : public Clock {
 public:
  explicit SimulatedClock(Instant start = Instant{}) : now_(start) {}
  Instant now() const override { return now_; }
  void sleep_for(Duration d) override { now_ += d; }
  void set(Instant t) { now_ = t; }

 private:
  Instant now_;
};

}  // namespace buildherd
