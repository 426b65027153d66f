#include "buildherd/triggers.hpp"

#include <algorithm>

#include "buildherd/error.hpp"

namespace buildherd {

namespace {

constexpr Duration kDay = std::chrono::hours{24};

bool strict_hooked(const CoalescerState& s) {
  return s.quiet_period == Duration::zero() && std::holds_alternative<Hooked>(s.detection);
}

std::uint64_t newest_pending_seq(const CoalescerState& s) {
  return s.pending.empty() ? 0 : s.pending.back().change.revision.seq;
}

}  // namespace

CoalescerState make_coalescer(const Triggered& policy) {
  CoalescerState s;
  s.quiet_period = policy.quiet_period;
  s.detection = policy.detection;
  return s;
}

Instant next_fire(const Schedule& schedule, Instant now) {
  std::optional<Instant> best;
  auto consider = [&](Instant t) {
    if (t > now && (!best || t < *best)) best = t;
  };

  if (schedule.every && *schedule.every > Duration::zero()) consider(now + *schedule.every);

  if (!schedule.daily_times.empty()) {
    const Duration offset = schedule.utc_offset;
    const auto local = now + offset;
    const auto day_start = std::chrono::floor<std::chrono::days>(local);
    for (int d = 0; d <= 1; ++d) {
      for (const auto tod : schedule.daily_times) {
        consider(Instant{day_start + std::chrono::days{d} + tod} - offset);
      }
    }
  }

  if (!best) {
    throw Error(ErrorCode::kInvalidPolicy, "empty schedule has no fire time");
  }
  return *best;
}

std::optional<BuildRequest> poll_once(const RepositoryHandle& repo, const Revision& last_integrated,
                                      Instant now) {
  const auto current = head(repo);
  if (current == last_integrated) return std::nullopt;
  auto changes = changes_since(repo, last_integrated);
  if (changes.empty()) return std::nullopt;
  return BuildRequest{PollDetected{now}, std::move(changes), current, now};
}

CoalescerState ingest_changes(CoalescerState state, std::span<const Change> changes,
                              Instant arrived_at, std::uint64_t last_integrated_seq) {
  auto newest = std::max(newest_pending_seq(state), last_integrated_seq);
  for (const auto& c : changes) {
    if (c.revision.seq <= newest) continue;
    state.pending.push_back(PendingChange{c, arrived_at});
    newest = c.revision.seq;
  }
  return state;
}

CoalescerState ingest_notification(CoalescerState state, const HookNotification& n,
                                   const RepositoryHandle& repo, const Revision& last_integrated) {
  if (n.repo_id != repo.repo_id) {
    throw Error(ErrorCode::kInvalidArgument,
                "notification for " + n.repo_id + " delivered to " + repo.repo_id);
  }
  if (state.seen_nonces.contains(n.nonce)) return state;

  const Revision& since = newest_pending_seq(state) > last_integrated.seq
                              ? state.pending.back().change.revision
                              : last_integrated;
  auto changes = changes_since(repo, since);
  state.seen_nonces.insert(n.nonce);
  return ingest_changes(std::move(state), changes, n.received_at, last_integrated.seq);
}

std::optional<Instant> coalesce_deadline(const CoalescerState& state) {
  if (state.pending.empty()) return std::nullopt;
  auto earliest = state.pending.front().arrived_at;
  if (state.last_build_end) earliest = std::max(earliest, *state.last_build_end + state.quiet_period);
  return earliest;
}

std::optional<Coalesced> coalesce(CoalescerState state, Instant now, bool build_running) {
  if (build_running || state.pending.empty()) return std::nullopt;
  if (now < *coalesce_deadline(state)) return std::nullopt;

  const std::size_t take = strict_hooked(state) ? 1 : state.pending.size();
  const auto split = state.pending.begin() + static_cast<std::ptrdiff_t>(take);

  BuildRequest req;
  req.created_at = now;
  const Instant newest_arrival = std::prev(split)->arrived_at;
  for (auto it = state.pending.begin(); it != split; ++it) req.changes.push_back(it->change);
  req.target_revision = req.changes.back().revision;
  if (std::holds_alternative<Hooked>(state.detection)) {
    req.cause = HookNotified{newest_arrival};
  } else {
    req.cause = PollDetected{newest_arrival};
  }
  state.pending.erase(state.pending.begin(), split);
  return Coalesced{std::move(req), std::move(state)};
}

std::size_t pending_requests(const CoalescerState& state) {
  if (state.pending.empty()) return 0;
  return strict_hooked(state) ? state.pending.size() : 1;
}

}  // namespace buildherd
