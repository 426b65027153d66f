#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "buildherd/model.hpp"
#include "buildherd/vcs.hpp"

namespace buildherd {

// Untrusted "something changed" ping from a repository hook. The change
// data itself is always pulled from the repository.
struct HookNotification {
  std::string repo_id;
  Instant received_at;
  std::optional<Revision> claimed_revision;
  std::string nonce;

  friend bool operator==(const HookNotification&, const HookNotification&) = default;
};

struct PendingChange {
  Change change;
  Instant arrived_at;  // when the server learned about it

  friend bool operator==(const PendingChange&, const PendingChange&) = default;
};

struct CoalescerState {
  std::vector<PendingChange> pending;  // ascending by seq, no duplicates
  std::optional<Instant> last_build_end;
  Duration quiet_period{0};
  Detection detection = Hooked{};
  std::set<std::string> seen_nonces;

  friend bool operator==(const CoalescerState&, const CoalescerState&) = default;
};

CoalescerState make_coalescer(const Triggered& policy);

// Earliest instant strictly after `now` matching a daily time or `every`
// anchored at `now`.
Instant next_fire(const Schedule& schedule, Instant now);

// A PollDetected request covering everything after `last_integrated`, or
// nothing when the repository has not moved.
std::optional<BuildRequest> poll_once(const RepositoryHandle& repo, const Revision& last_integrated,
                                      Instant now);

// Appends changes newer than both `pending` and `last_integrated`.
CoalescerState ingest_changes(CoalescerState state, std::span<const Change> changes,
                              Instant arrived_at, std::uint64_t last_integrated_seq = 0);

// Pulls changes after max(last_integrated, newest pending) into pending.
// Replayed nonces are no-ops. Repository errors propagate and leave the
// caller's state untouched.
CoalescerState ingest_notification(CoalescerState state, const HookNotification& n,
                                   const RepositoryHandle& repo, const Revision& last_integrated);

// Instant from which the pending changes may be emitted: the later of
// last_build_end + quiet_period and the first pending arrival.
std::optional<Instant> coalesce_deadline(const CoalescerState& state);

struct Coalesced {
  BuildRequest request;
  CoalescerState state;
};

// Emits one request when idle and past the deadline. Hooked detection with
// no quiet period builds one change at a time; everything else batches.
std::optional<Coalesced> coalesce(CoalescerState state, Instant now, bool build_running);

// Number of build requests the pending changes stand for.
std::size_t pending_requests(const CoalescerState& state);

}  // namespace buildherd
