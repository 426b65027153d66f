#include "buildherd/time.hpp"

#include <thread>

namespace buildherd {

Instant SystemClock::now() const {
  return std::chrono::time_point_cast<Duration>(std::chrono::system_clock::now());
}

void SystemClock::sleep_for(Duration d) { std::this_thread::sleep_for(d); }

}  // namespace buildherd
