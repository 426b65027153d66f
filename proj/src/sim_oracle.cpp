// Reference simulator. Shares no logic with the orchestrator: every rule is
// re-stated here as a per-millisecond check so the two can be compared.

#include <algorithm>
#include <deque>

#include "buildherd/detail/sim_checks.hpp"
#include "buildherd/sim.hpp"

namespace buildherd {

namespace {

constexpr std::int64_t kDayMs = 24LL * 60 * 60 * 1000;

struct Waiting {
  std::uint64_t seq;
  std::int64_t arrived;
};

struct Job {
  std::string cause;
  std::vector<std::uint64_t> seqs;
  std::uint64_t target = 0;
  std::int64_t start = 0;
  std::int64_t end = 0;
};

std::int64_t positive_mod(std::int64_t a, std::int64_t m) { return ((a % m) + m) % m; }

}  // namespace

SimReport brute_force_replay(const CommitTrace& trace, const TriggerPolicy& policy,
                             const SimOptions& options) {
  detail::check_sim_inputs(trace, policy, options);

  const auto* trig = std::get_if<Triggered>(&policy);
  const auto* sched = std::get_if<Scheduled>(&policy);
  const bool hooked = trig && std::holds_alternative<Hooked>(trig->detection);
  const bool polled = trig && !hooked;
  const std::int64_t interval = polled ? std::get<Polled>(trig->detection).interval.count() : 0;
  const std::int64_t quiet = trig ? trig->quiet_period.count() : 0;
  const bool one_per_change = hooked && quiet == 0;
  const std::int64_t duration = options.build_duration.count();
  const bool bounded = options.horizon.has_value();
  const std::int64_t horizon = bounded ? to_ms(*options.horizon) : 0;

  std::vector<std::int64_t> commit_time;  // commit_time[seq - 1]
  std::size_t next_commit = 0;
  std::uint64_t head = 0;
  std::uint64_t seen = 0;  // newest seq already picked up
  std::vector<Waiting> pending;
  std::deque<Job> queue;
  std::optional<Job> running;
  std::optional<std::int64_t> last_end;
  std::int64_t last_fire = 0;
  std::vector<Job> done;

  SimReport report;
  std::size_t last_depth = 0;

  auto dispatch = [&](std::int64_t t) {
    if (trig && !running && !pending.empty()) {
      std::int64_t earliest = pending.front().arrived;
      if (last_end) earliest = std::max(earliest, *last_end + quiet);
      if (t >= earliest) {
        const std::size_t take = one_per_change ? 1 : pending.size();
        Job job{hooked ? "hook_notified" : "poll_detected", {}, 0};
        for (std::size_t i = 0; i < take; ++i) job.seqs.push_back(pending[i].seq);
        job.target = job.seqs.back();
        pending.erase(pending.begin(), pending.begin() + static_cast<std::ptrdiff_t>(take));
        queue.push_back(std::move(job));
      }
    }

    if (!running && !queue.empty()) {
      running = std::move(queue.front());
      queue.pop_front();
      running->start = t;
      running->end = t + duration;
    }
  };

  for (std::int64_t t = 0;; ++t) {
    const bool open = !bounded || t <= horizon;

    bool committed = false;
    while (open && next_commit < trace.size() && to_ms(trace[next_commit].at) == t) {
      commit_time.push_back(t);
      ++head;
      ++next_commit;
      committed = true;
    }

    if (hooked && committed) {
      for (auto s = seen + 1; s <= head; ++s) pending.push_back({s, t});
      seen = head;
    }

    // A finishing build hands the runner to work already waiting before
    // this instant's polls and fires are looked at.
    if (running && running->end == t) {
      done.push_back(*running);
      last_end = t;
      running.reset();
      dispatch(t);
    }

    if (polled && open && t > 0 && t % interval == 0) {
      for (auto s = seen + 1; s <= head; ++s) pending.push_back({s, t});
      seen = head;
    }

    if (sched && open && t > 0) {
      const auto& s = sched->schedule;
      bool fire = s.every && t - last_fire == s.every->count();
      const std::int64_t local = positive_mod(t + std::chrono::duration_cast<Duration>(s.utc_offset).count(), kDayMs);
      for (auto tod : s.daily_times) {
        if (std::chrono::duration_cast<Duration>(tod).count() == local) fire = true;
      }
      if (fire) {
        queue.push_back(Job{"schedule_fire", {}, head});
        last_fire = t;
      }
    }

    dispatch(t);

    const std::size_t waiting = pending.empty() ? 0 : (one_per_change ? pending.size() : 1);
    const std::size_t depth = queue.size() + waiting;
    if (depth != last_depth) {
      report.queue_depth.push_back(QueueSample{from_ms(t), depth});
      last_depth = depth;
    }

    const bool idle = !running && queue.empty() && pending.empty();
    if (bounded) {
      if (t >= horizon && idle) break;
    } else if (next_commit == trace.size() && idle && seen == head) {
      break;
    }
  }

  std::int64_t total = 0;
  std::int64_t worst = 0;
  for (const auto& job : done) {
    SimBuild b{job.cause, from_ms(job.start), from_ms(job.end), job.seqs, job.target};
    report.builds.push_back(b);
    for (auto s : job.seqs) {
      const auto latency = job.end - commit_time[s - 1];
      total += latency;
      worst = std::max(worst, latency);
      ++report.metrics.n_changes;
    }
  }
  report.metrics.n_builds = done.size();
  if (report.metrics.n_changes > 0) {
    report.metrics.mean_latency = Duration{total / static_cast<std::int64_t>(report.metrics.n_changes)};
    report.metrics.max_latency = Duration{worst};
  }
  for (const auto& s : report.queue_depth) {
    report.metrics.max_queue_depth = std::max(report.metrics.max_queue_depth, s.depth);
  }
  return report;
}

}  // namespace buildherd
