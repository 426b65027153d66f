#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "buildherd/time.hpp"

namespace buildherd {

struct Revision {
  std::string id;
  std::uint64_t seq = 0;

  friend bool operator==(const Revision&, const Revision&) = default;
};

struct Change {
  Revision revision;
  std::string author;
  Instant timestamp;
  std::vector<std::string> changed_paths;

  friend bool operator==(const Change&, const Change&) = default;
};

// Minutes after local midnight.
using TimeOfDay = std::chrono::minutes;

struct Schedule {
  std::vector<TimeOfDay> daily_times;  // sorted, unique
  std::optional<Duration> every;
  // Offset of the repository-local day from UTC.
  std::chrono::minutes utc_offset{0};

  friend bool operator==(const Schedule&, const Schedule&) = default;
};

struct Polled {
  Duration interval{0};
  friend bool operator==(const Polled&, const Polled&) = default;
};

struct Hooked {
  friend bool operator==(const Hooked&, const Hooked&) = default;
};

using Detection = std::variant<Polled, Hooked>;

struct Levered {
  friend bool operator==(const Levered&, const Levered&) = default;
};

struct Scheduled {
  Schedule schedule;
  friend bool operator==(const Scheduled&, const Scheduled&) = default;
};

// quiet_period == 0 is strict CI; anything longer lessens it.
struct Triggered {
  Detection detection;
  Duration quiet_period{0};
  friend bool operator==(const Triggered&, const Triggered&) = default;
};

using TriggerPolicy = std::variant<Levered, Scheduled, Triggered>;

enum class Mode { kOnDemand, kContinual };
enum class Maturity { kNone, kTransitional, kStrict };
enum class TriggerKind { kNone, kScheduled, kPolled, kHooked };

struct ClassificationLabel {
  Mode mode = Mode::kOnDemand;
  Maturity maturity = Maturity::kNone;
  TriggerKind trigger_kind = TriggerKind::kNone;

  friend bool operator==(const ClassificationLabel&, const ClassificationLabel&) = default;
};

std::string to_string(Mode m);
std::string to_string(Maturity m);
std::string to_string(TriggerKind k);
// "Continual/Strict/Hooked"
std::string to_string(const ClassificationLabel& label);

struct Commanded {
  std::string actor;
  friend bool operator==(const Commanded&, const Commanded&) = default;
};
struct ScheduleFire {
  Instant fire_time;
  friend bool operator==(const ScheduleFire&, const ScheduleFire&) = default;
};
struct PollDetected {
  Instant poll_time;
  friend bool operator==(const PollDetected&, const PollDetected&) = default;
};
struct HookNotified {
  Instant received_time;
  friend bool operator==(const HookNotified&, const HookNotified&) = default;
};

using BuildCause = std::variant<Commanded, ScheduleFire, PollDetected, HookNotified>;

std::string cause_kind(const BuildCause& cause);

struct BuildRequest {
  BuildCause cause;
  std::vector<Change> changes;  // ascending by revision.seq
  Revision target_revision;
  Instant created_at;

  friend bool operator==(const BuildRequest&, const BuildRequest&) = default;
};

struct Succeeded {
  friend bool operator==(const Succeeded&, const Succeeded&) = default;
};
struct Failed {
  int exit_code = 1;
  friend bool operator==(const Failed&, const Failed&) = default;
};

using StepStatus = std::variant<Succeeded, Failed>;

inline bool is_failure(const StepStatus& s) { return std::holds_alternative<Failed>(s); }

struct StepResult {
  std::string step_name;
  StepStatus status;
  std::string captured_output;  // raw bytes
  bool output_truncated = false;
  Duration duration{0};

  friend bool operator==(const StepResult&, const StepResult&) = default;
};

struct Success {
  friend bool operator==(const Success&, const Success&) = default;
};
struct FailedAt {
  std::string step_name;
  friend bool operator==(const FailedAt&, const FailedAt&) = default;
};
struct Errored {
  std::string reason;
  friend bool operator==(const Errored&, const Errored&) = default;
};

using Outcome = std::variant<Success, FailedAt, Errored>;

std::string outcome_kind(const Outcome& outcome);

struct BuildRun {
  std::uint64_t run_id = 0;
  std::string project;
  BuildRequest request;
  Instant started_at;
  Instant ended_at;
  std::vector<StepResult> step_results;
  Outcome outcome;

  friend bool operator==(const BuildRun&, const BuildRun&) = default;
};

// Position of a trigger policy in the build-method taxonomy.
ClassificationLabel classify(const TriggerPolicy& policy);

// Time from the change's commit instant to the end of the run that
// integrated it. Throws kChangeNotInRun when the run does not include it.
Duration feedback_latency(const BuildRun& run, const Change& change);

// Empty when the policy is valid.
std::vector<std::string> validate_policy(const TriggerPolicy& policy);

}  // namespace buildherd
