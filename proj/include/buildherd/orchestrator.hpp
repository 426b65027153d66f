#pragma once

#include <cstddef>
#include <deque>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "buildherd/model.hpp"
#include "buildherd/pipeline.hpp"
#include "buildherd/triggers.hpp"
#include "buildherd/vcs.hpp"

namespace buildherd {

// ---------------------------------------------------------------------------
// Events and actions

struct ClockAdvanced {};
struct HookReceived {
  HookNotification notification;
};
struct CommandReceived {
  std::string actor;
  std::string project_id;
};
struct BuildFinished {
  BuildRun run;
};

struct Event {
  Instant at;
  std::variant<ClockAdvanced, HookReceived, CommandReceived, BuildFinished> payload;
};

struct StartBuild {
  BuildRequest request;
};
struct RecordRun {
  BuildRun run;
};
struct Rejected {
  std::string reason;
};
// A trigger could not reach the repository; it retries on the next
// occasion.
struct Degraded {
  std::string reason;
};

using Action = std::variant<StartBuild, RecordRun, Rejected, Degraded>;

// ---------------------------------------------------------------------------
// Per-project state

struct ProjectState {
  std::string project_id;
  TriggerPolicy policy;
  BuildDefinition definition;
  RepositoryHandle repo;

  Revision last_integrated;
  // Newest revision already handed to the coalescer, the queue or a build.
  Revision claimed;
  CoalescerState coalescer;
  std::deque<BuildRequest> queue;
  std::optional<BuildRequest> running;
  // Changes of errored runs; they ride along with the next request that
  // pulls changes.
  std::vector<Change> parked;

  std::optional<Instant> next_poll_at;
  std::optional<Instant> next_schedule_at;
  std::optional<Instant> last_event_at;
};

// Validates policy and definition (kInvalidPolicy / kInvalidDefinition) and
// arms the timers relative to `start`. The current head counts as already
// integrated.
ProjectState make_project(std::string project_id, TriggerPolicy policy, BuildDefinition definition,
                          RepositoryHandle repo, Instant start);

struct Submitted {
  ProjectState state;
  BuildRequest request;
};

// The lever: enqueue a build of head with every unclaimed change. Works
// under any policy. Repository errors propagate.
Submitted submit_command(ProjectState state, const std::string& actor, Instant now);

struct Transition {
  ProjectState state;
  std::vector<Action> actions;
};

Transition step(ProjectState state, const Event& event);

// Next instant at which a ClockAdvanced event would do something.
std::optional<Instant> next_wakeup(const ProjectState& state);

// Queued requests plus the requests the pending changes will become.
std::size_t queue_depth(const ProjectState& state);

// Nothing running, queued or pending, and (for polled projects) nothing left
// to discover in the repository.
bool is_quiescent(const ProjectState& state);

// Stops polls and schedule fires.
void disarm_timers(ProjectState& state);

// ---------------------------------------------------------------------------
// Deterministic replay on a simulated clock

struct CommitAction {
  std::string author;
  std::vector<std::string> paths;
};
struct CommandAction {
  std::string actor;
};

struct ScriptItem {
  Instant at;
  std::variant<CommitAction, HookNotification, CommandAction> what;
};

struct QueueSample {
  Instant at;
  std::size_t depth = 0;
  friend bool operator==(const QueueSample&, const QueueSample&) = default;
};

struct ReplayOptions {
  // Script items, polls and schedule fires after the horizon are dropped;
  // work already accepted still drains.
  std::optional<Instant> horizon;
  std::filesystem::path workspace = std::filesystem::temp_directory_path();
  std::uint64_t first_run_id = 1;
};

struct ReplayResult {
  ProjectState state;
  std::vector<BuildRun> runs;
  // Recorded whenever the depth changes, after all events of an instant.
  std::vector<QueueSample> queue_depth;
  std::vector<Action> notices;  // Rejected and Degraded actions
};

// Feeds the script through `step` on a simulated clock, runs each started
// build with run_pipeline, and stops once everything has drained. Commits
// at an instant are applied before the other items of that instant. Builds
// finishing at an instant are handled after that instant's script items.
ReplayResult replay(ProjectState state, const std::vector<ScriptItem>& script,
                    const ReplayOptions& options = {});

std::vector<BuildRun> run_until_idle(ProjectState state, const std::vector<ScriptItem>& script);

}  // namespace buildherd
