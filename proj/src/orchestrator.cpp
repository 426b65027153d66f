#include "buildherd/orchestrator.hpp"

#include <algorithm>

#include "buildherd/detail/overloaded.hpp"
#include "buildherd/error.hpp"

namespace buildherd {

using detail::overloaded;

namespace {

const Polled* polled_of(const TriggerPolicy& policy) {
  const auto* t = std::get_if<Triggered>(&policy);
  return t ? std::get_if<Polled>(&t->detection) : nullptr;
}

bool is_hooked(const TriggerPolicy& policy) {
  const auto* t = std::get_if<Triggered>(&policy);
  return t && std::holds_alternative<Hooked>(t->detection);
}

void claim(ProjectState& s, const Revision& r) {
  if (r.seq > s.claimed.seq) s.claimed = r;
}

void sort_by_seq(std::vector<Change>& changes) {
  std::sort(changes.begin(), changes.end(), [](const Change& a, const Change& b) {
    return a.revision.seq < b.revision.seq;
  });
}

// Parked changes precede anything pending, so prepending keeps the order.
void unpark_into_pending(ProjectState& s, Instant now) {
  if (s.parked.empty()) return;
  std::vector<PendingChange> merged;
  merged.reserve(s.parked.size() + s.coalescer.pending.size());
  for (auto& c : s.parked) merged.push_back(PendingChange{std::move(c), now});
  for (auto& p : s.coalescer.pending) merged.push_back(std::move(p));
  s.coalescer.pending = std::move(merged);
  s.parked.clear();
}

void coalesce_into_queue(ProjectState& s, Instant now) {
  if (!std::holds_alternative<Triggered>(s.policy)) return;
  // coalesce takes its state by value; a refusal must leave ours intact.
  if (auto out = coalesce(s.coalescer, now, s.running.has_value())) {
    s.queue.push_back(std::move(out->request));
    s.coalescer = std::move(out->state);
  }
}

void start_if_idle(ProjectState& s, std::vector<Action>& actions) {
  if (s.running || s.queue.empty()) return;
  s.running = std::move(s.queue.front());
  s.queue.pop_front();
  actions.emplace_back(StartBuild{*s.running});
}

void run_due_poll(ProjectState& s, Instant now, std::vector<Action>& actions) {
  const auto* polled = polled_of(s.policy);
  if (!polled || !s.next_poll_at || *s.next_poll_at > now) return;
  try {
    refresh(s.repo, now);
    if (auto req = poll_once(s.repo, s.claimed, now)) {
      const std::size_t before = s.coalescer.pending.size();
      s.coalescer = ingest_changes(std::move(s.coalescer), req->changes, now, s.claimed.seq);
      if (s.coalescer.pending.size() > before) unpark_into_pending(s, now);
      claim(s, req->target_revision);
    }
  } catch (const Error& e) {
    actions.emplace_back(Degraded{"poll of " + s.repo.repo_id + " failed: " + e.what()});
  }
  while (*s.next_poll_at <= now) *s.next_poll_at += polled->interval;
}

void run_due_schedule(ProjectState& s, Instant now, std::vector<Action>& actions) {
  const auto* scheduled = std::get_if<Scheduled>(&s.policy);
  if (!scheduled || !s.next_schedule_at || *s.next_schedule_at > now) return;
  const Instant fire_time = *s.next_schedule_at;
  try {
    const auto current = refresh(s.repo, now);
    s.queue.push_back(BuildRequest{ScheduleFire{fire_time}, {}, current, now});
    claim(s, current);
  } catch (const Error& e) {
    actions.emplace_back(Degraded{"scheduled build of " + s.project_id + " skipped: " + e.what()});
  }
  // Missed fire times collapse into the one that just ran.
  Instant next = next_fire(scheduled->schedule, fire_time);
  while (next <= now) next = next_fire(scheduled->schedule, next);
  s.next_schedule_at = next;
}

void on_hook(ProjectState& s, const HookNotification& n, Instant now, std::vector<Action>& actions) {
  if (n.repo_id != s.repo.repo_id) {
    actions.emplace_back(Rejected{"notification for unknown repository " + n.repo_id});
    return;
  }
  if (!is_hooked(s.policy)) return;  // other policies do not listen
  try {
    refresh(s.repo, now);
    const std::size_t before = s.coalescer.pending.size();
    s.coalescer = ingest_notification(s.coalescer, n, s.repo, s.claimed);
    if (s.coalescer.pending.size() > before) {
      claim(s, s.coalescer.pending.back().change.revision);
      unpark_into_pending(s, now);
    }
  } catch (const Error& e) {
    actions.emplace_back(Degraded{"hook intake for " + s.repo.repo_id + " failed: " + e.what()});
  }
  coalesce_into_queue(s, now);
}

void on_finished(ProjectState& s, const BuildRun& run, Instant now, std::vector<Action>& actions) {
  if (run.project != s.project_id) {
    actions.emplace_back(Rejected{"run for unknown project " + run.project});
    return;
  }
  if (!s.running) {
    actions.emplace_back(Rejected{"no build running for " + s.project_id});
    return;
  }
  actions.emplace_back(RecordRun{run});
  if (std::holds_alternative<Errored>(run.outcome)) {
    // Infrastructure fault: nothing was integrated.
    for (const auto& c : run.request.changes) s.parked.push_back(c);
    sort_by_seq(s.parked);
  } else if (run.request.target_revision.seq > s.last_integrated.seq) {
    s.last_integrated = run.request.target_revision;
  }
  s.running.reset();
  s.coalescer.last_build_end = run.ended_at;
  coalesce_into_queue(s, now);
}

}  // namespace

ProjectState make_project(std::string project_id, TriggerPolicy policy, BuildDefinition definition,
                          RepositoryHandle repo, Instant start) {
  if (auto v = validate_policy(policy); !v.empty()) {
    throw Error(ErrorCode::kInvalidPolicy, "project " + project_id + ": " + v.front());
  }
  if (auto v = validate_definition(definition); !v.empty()) {
    throw Error(ErrorCode::kInvalidDefinition, "project " + project_id + ": " + v.front());
  }

  ProjectState s;
  s.project_id = std::move(project_id);
  s.definition = std::move(definition);
  s.definition.project_id = s.project_id;
  s.repo = std::move(repo);
  s.last_integrated = head(s.repo);
  s.claimed = s.last_integrated;

  if (const auto* t = std::get_if<Triggered>(&policy)) {
    s.coalescer = make_coalescer(*t);
    if (const auto* p = std::get_if<Polled>(&t->detection)) s.next_poll_at = start + p->interval;
  } else if (const auto* sch = std::get_if<Scheduled>(&policy)) {
    s.next_schedule_at = next_fire(sch->schedule, start);
  }
  s.policy = std::move(policy);
  return s;
}

Submitted submit_command(ProjectState s, const std::string& actor, Instant now) {
  const auto current = refresh(s.repo, now);
  auto fresh = changes_since(s.repo, s.claimed);

  std::vector<Change> changes = std::move(s.parked);
  s.parked.clear();
  for (auto& p : s.coalescer.pending) changes.push_back(std::move(p.change));
  s.coalescer.pending.clear();
  for (auto& c : fresh) changes.push_back(std::move(c));
  sort_by_seq(changes);

  BuildRequest req{Commanded{actor}, std::move(changes), current, now};
  s.queue.push_back(req);
  claim(s, current);
  return Submitted{std::move(s), std::move(req)};
}

Transition step(ProjectState s, const Event& event) {
  std::vector<Action> actions;
  if (s.last_event_at && event.at < *s.last_event_at) {
    actions.emplace_back(Rejected{"event out of order"});
    return Transition{std::move(s), std::move(actions)};
  }
  s.last_event_at = event.at;
  const Instant now = event.at;

  std::visit(overloaded{
                 [&](const ClockAdvanced&) {
                   run_due_poll(s, now, actions);
                   run_due_schedule(s, now, actions);
                   coalesce_into_queue(s, now);
                 },
                 [&](const HookReceived& h) { on_hook(s, h.notification, now, actions); },
                 [&](const CommandReceived& c) {
                   if (c.project_id != s.project_id) {
                     actions.emplace_back(Rejected{"unknown project " + c.project_id});
                     return;
                   }
                   try {
                     s = submit_command(std::move(s), c.actor, now).state;
                   } catch (const Error& e) {
                     actions.emplace_back(Rejected{std::string("command rejected: ") + e.what()});
                   }
                 },
                 [&](const BuildFinished& f) { on_finished(s, f.run, now, actions); },
             },
             event.payload);

  start_if_idle(s, actions);
  return Transition{std::move(s), std::move(actions)};
}

std::optional<Instant> next_wakeup(const ProjectState& s) {
  std::optional<Instant> best;
  auto consider = [&](std::optional<Instant> t) {
    if (t && (!best || *t < *best)) best = t;
  };
  consider(s.next_poll_at);
  consider(s.next_schedule_at);
  if (!s.running) consider(coalesce_deadline(s.coalescer));
  return best;
}

std::size_t queue_depth(const ProjectState& s) {
  return s.queue.size() + pending_requests(s.coalescer);
}

bool is_quiescent(const ProjectState& s) {
  if (s.running || !s.queue.empty() || !s.coalescer.pending.empty()) return false;
  if (!polled_of(s.policy)) return true;
  try {
    return s.claimed.seq >= head(s.repo).seq;
  } catch (const Error&) {
    return true;
  }
}

void disarm_timers(ProjectState& s) {
  s.next_poll_at.reset();
  s.next_schedule_at.reset();
}

// ---------------------------------------------------------------------------
// Replay

ReplayResult replay(ProjectState state, const std::vector<ScriptItem>& script,
                    const ReplayOptions& options) {
  for (std::size_t i = 1; i < script.size(); ++i) {
    if (script[i].at < script[i - 1].at) {
      throw Error(ErrorCode::kInvalidArgument, "script is not ordered by time");
    }
  }

  ReplayResult result;
  SimulatedClock clock;
  std::optional<BuildRun> in_flight;
  std::uint64_t next_run_id = options.first_run_id;
  std::size_t last_depth = 0;
  std::size_t pos = 0;
  bool disarmed = false;
  const auto& horizon = options.horizon;

  auto handle = [&](Transition t, Instant now) {
    state = std::move(t.state);
    for (auto& action : t.actions) {
      std::visit(overloaded{
                     [&](StartBuild& sb) {
                       clock.set(now);
                       BuildRun run =
                           run_pipeline(state.definition, sb.request, options.workspace, clock);
                       run.run_id = next_run_id++;
                       in_flight = std::move(run);
                     },
                     [&](RecordRun& rr) { result.runs.push_back(std::move(rr.run)); },
                     [&](auto& other) { result.notices.emplace_back(std::move(other)); },
                 },
                 action);
    }
  };

  auto within_horizon = [&](Instant t) { return !horizon || t <= *horizon; };

  for (;;) {
    std::optional<Instant> next;
    auto consider = [&](std::optional<Instant> t) {
      if (t && (!next || *t < *next)) next = t;
    };
    if (pos < script.size() && within_horizon(script[pos].at)) consider(script[pos].at);
    if (in_flight) consider(in_flight->ended_at);
    if (!state.running) consider(coalesce_deadline(state.coalescer));

    const bool script_done = pos >= script.size() || !within_horizon(script[pos].at);
    if (!horizon && script_done && !in_flight && is_quiescent(state)) break;

    std::optional<Instant> timer;
    if (state.next_poll_at) timer = state.next_poll_at;
    if (state.next_schedule_at && (!timer || *state.next_schedule_at < *timer)) {
      timer = state.next_schedule_at;
    }
    if (timer && within_horizon(*timer)) consider(timer);

    if (!next) break;
    const Instant t = *next;
    if (!disarmed && horizon && t > *horizon) {
      disarm_timers(state);
      disarmed = true;
    }
    clock.set(t);

    // Commits of this instant land before anything reacts to them.
    std::size_t end = pos;
    while (end < script.size() && script[end].at == t && within_horizon(t)) ++end;
    for (std::size_t i = pos; i < end; ++i) {
      if (const auto* c = std::get_if<CommitAction>(&script[i].what)) {
        commit(state.repo, c->author, c->paths, t);
      }
    }
    for (std::size_t i = pos; i < end; ++i) {
      std::visit(overloaded{
                     [](const CommitAction&) {},
                     [&](const HookNotification& n) {
                       handle(step(std::move(state), Event{t, HookReceived{n}}), t);
                     },
                     [&](const CommandAction& c) {
                       Event e{t, CommandReceived{c.actor, state.project_id}};
                       handle(step(std::move(state), e), t);
                     },
                 },
                 script[i].what);
    }
    pos = end;

    if (in_flight && in_flight->ended_at == t) {
      BuildRun done = std::move(*in_flight);
      in_flight.reset();
      handle(step(std::move(state), Event{t, BuildFinished{std::move(done)}}), t);
    }
    handle(step(std::move(state), Event{t, ClockAdvanced{}}), t);

    const std::size_t depth = queue_depth(state);
    if (depth != last_depth) {
      result.queue_depth.push_back(QueueSample{t, depth});
      last_depth = depth;
    }
  }

  result.state = std::move(state);
  return result;
}

std::vector<BuildRun> run_until_idle(ProjectState state, const std::vector<ScriptItem>& script) {
  return replay(std::move(state), script).runs;
}

}  // namespace buildherd
