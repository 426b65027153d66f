#include <map>
#include <random>

#include "doctest.h"

#include "buildherd/error.hpp"
#include "buildherd/orchestrator.hpp"

using namespace buildherd;
using namespace std::chrono_literals;

namespace {

BuildDefinition sleeper(std::int64_t ms) {
  StubCommand c;
  c.duration = Duration{ms};
  return BuildDefinition{"", {BuildStep{"build", c}}};
}

BuildDefinition broken() {
  return BuildDefinition{"", {BuildStep{"build", ExecCommand{{"/nonexistent/buildherd-tool"}}}}};
}

ProjectState project(TriggerPolicy policy, BuildDefinition def = sleeper(5)) {
  return make_project("p1", std::move(policy), std::move(def), make_in_memory("r1"), Instant{});
}

ScriptItem commit_at(std::int64_t t, std::string path = "f") {
  return ScriptItem{from_ms(t), CommitAction{"dev", {std::move(path)}}};
}
ScriptItem hook_at(std::int64_t t, std::string nonce) {
  return ScriptItem{from_ms(t), HookNotification{"r1", from_ms(t), std::nullopt, std::move(nonce)}};
}
ScriptItem command_at(std::int64_t t) { return ScriptItem{from_ms(t), CommandAction{"alice"}}; }

template <class T>
std::size_t count(const std::vector<Action>& actions) {
  std::size_t n = 0;
  for (const auto& a : actions) n += std::holds_alternative<T>(a);
  return n;
}

BuildRun finished(const BuildRequest& req, std::int64_t start, std::int64_t end, Outcome o = Success{}) {
  BuildRun run;
  run.project = "p1";
  run.request = req;
  run.started_at = from_ms(start);
  run.ended_at = from_ms(end);
  run.outcome = std::move(o);
  return run;
}

std::vector<std::uint64_t> seqs(const BuildRun& r) {
  std::vector<std::uint64_t> out;
  for (const auto& c : r.request.changes) out.push_back(c.revision.seq);
  return out;
}

}  // namespace

TEST_CASE("make_project rejects invalid policies and definitions") {
  CHECK_THROWS_AS(project(Triggered{Polled{0ms}, 0ms}), Error);
  CHECK_THROWS_AS(project(Levered{}, BuildDefinition{}), Error);
  try {
    project(Scheduled{Schedule{}});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInvalidPolicy);
  }
}

TEST_CASE("submit_command builds head with every unclaimed change") {
  auto s = project(Levered{});
  commit(s.repo, "ann", {"a"}, from_ms(1));
  const auto h = commit(s.repo, "bob", {"b"}, from_ms(2));

  auto sub = submit_command(s, "alice", from_ms(3));
  CHECK(sub.request.cause == BuildCause{Commanded{"alice"}});
  CHECK(sub.request.changes.size() == 2);
  CHECK(sub.request.target_revision == h);
  CHECK(sub.state.queue.size() == 1);

  // Nothing new: still a build of head, with no changes.
  auto again = submit_command(sub.state, "bob", from_ms(4));
  CHECK(again.request.changes.empty());
  CHECK(again.request.target_revision == h);
  CHECK(again.state.queue.size() == 2);
}

TEST_CASE("step: commands queue behind the running build") {
  auto s = project(Levered{});
  auto t = step(s, Event{from_ms(0), CommandReceived{"alice", "p1"}});
  REQUIRE(count<StartBuild>(t.actions) == 1);
  const auto first = std::get<StartBuild>(t.actions[0]).request;
  CHECK(t.state.running.has_value());

  t = step(t.state, Event{from_ms(1), CommandReceived{"bob", "p1"}});
  CHECK(count<StartBuild>(t.actions) == 0);
  CHECK(queue_depth(t.state) == 1);

  t = step(t.state, Event{from_ms(5), BuildFinished{finished(first, 0, 5)}});
  CHECK(count<RecordRun>(t.actions) == 1);
  REQUIRE(count<StartBuild>(t.actions) == 1);
  CHECK(queue_depth(t.state) == 0);

  SUBCASE("unknown project is rejected") {
    auto r = step(t.state, Event{from_ms(6), CommandReceived{"x", "nope"}});
    CHECK(count<Rejected>(r.actions) == 1);
  }
  SUBCASE("events from the past are rejected") {
    auto r = step(t.state, Event{from_ms(4), ClockAdvanced{}});
    CHECK(count<Rejected>(r.actions) == 1);
  }
  SUBCASE("finished with nothing running is rejected") {
    auto r = step(project(Levered{}), Event{from_ms(9), BuildFinished{finished(first, 0, 5)}});
    CHECK(count<Rejected>(r.actions) == 1);
  }
}

TEST_CASE("step: only hooked projects listen to notifications") {
  for (TriggerPolicy p : {TriggerPolicy{Levered{}}, TriggerPolicy{Triggered{Polled{100ms}, 0ms}}}) {
    auto s = project(p);
    commit(s.repo, "ann", {"a"}, from_ms(0));
    auto t = step(s, Event{from_ms(1), HookReceived{{"r1", from_ms(1), std::nullopt, "n"}}});
    CHECK(t.actions.empty());
    CHECK(queue_depth(t.state) == 0);
  }
  auto s = project(Triggered{Hooked{}, 0ms});
  auto t = step(s, Event{from_ms(1), HookReceived{{"other", from_ms(1), std::nullopt, "n"}}});
  CHECK(count<Rejected>(t.actions) == 1);
}

TEST_CASE("run_until_idle: strict hooked builds each commit in turn") {
  const auto runs = run_until_idle(project(Triggered{Hooked{}, 0ms}),
                                   {commit_at(0), hook_at(0, "a"), commit_at(1), hook_at(1, "b"),
                                    commit_at(2), hook_at(2, "c")});
  REQUIRE(runs.size() == 3);
  CHECK(runs[0].ended_at == from_ms(5));
  CHECK(runs[1].ended_at == from_ms(10));
  CHECK(runs[2].ended_at == from_ms(15));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(seqs(runs[i]) == std::vector<std::uint64_t>{i + 1});
    CHECK(runs[i].run_id == i + 1);
  }
}

TEST_CASE("run_until_idle: polled detection waits for the poll") {
  const auto runs = run_until_idle(project(Triggered{Polled{1000ms}, 0ms}, sleeper(500)),
                                   {commit_at(0)});
  REQUIRE(runs.size() == 1);
  CHECK(runs[0].request.cause == BuildCause{PollDetected{from_ms(1000)}});
  CHECK(runs[0].ended_at == from_ms(1500));
}

TEST_CASE("scheduled builds fire on time even without changes") {
  Schedule every;
  every.every = 100ms;
  ReplayOptions opts;
  opts.horizon = from_ms(350);
  const auto result = replay(project(Scheduled{every}), {commit_at(150)}, opts);
  REQUIRE(result.runs.size() == 3);
  CHECK(result.runs[0].request.cause == BuildCause{ScheduleFire{from_ms(100)}});
  CHECK(result.runs[0].request.target_revision.seq == 0);
  CHECK(result.runs[1].request.target_revision.seq == 1);
  CHECK(result.runs[2].started_at == from_ms(300));
}

TEST_CASE("errored runs park their changes instead of integrating them") {
  auto s = project(Levered{}, broken());
  const auto first = replay(s, {commit_at(0), command_at(1)});
  REQUIRE(first.runs.size() == 1);
  CHECK(std::holds_alternative<Errored>(first.runs[0].outcome));
  CHECK(first.state.last_integrated.seq == 0);
  CHECK(first.state.parked.size() == 1);

  // The next lever pull carries the parked change again.
  const auto second = replay(first.state, {commit_at(10), command_at(11)});
  REQUIRE(second.runs.size() == 1);
  CHECK(seqs(second.runs[0]) == std::vector<std::uint64_t>{1, 2});

  SUBCASE("hooked projects do not retry on their own") {
    const auto hooked = replay(project(Triggered{Hooked{}, 0ms}, broken()),
                               {commit_at(0), hook_at(0, "a")});
    CHECK(hooked.runs.size() == 1);
    CHECK(hooked.state.parked.size() == 1);
  }
}

TEST_CASE("random scripts: serial builds, every change built once, deterministic replay") {
  std::mt19937 rng(2024);
  for (int round = 0; round < 150; ++round) {
    TriggerPolicy policy;
    switch (round % 3) {
      case 0: policy = Levered{}; break;
      case 1: policy = Triggered{Hooked{}, Duration{round % 2 ? 0 : 7}}; break;
      default: policy = Triggered{Polled{Duration{std::uniform_int_distribution<int>(1, 20)(rng)}},
                                  Duration{round % 4 ? 0 : 3}};
    }
    const auto duration = std::uniform_int_distribution<int>(1, 15)(rng);

    std::vector<ScriptItem> script;
    std::int64_t t = 0;
    std::size_t commits = 0;
    const int n = std::uniform_int_distribution<int>(1, 40)(rng);
    for (int i = 0; i < n; ++i) {
      t += std::uniform_int_distribution<int>(0, 6)(rng);
      switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
        case 0:
          script.push_back(commit_at(t));
          ++commits;
          break;
        case 1: script.push_back(hook_at(t, "n" + std::to_string(i % 5 == 4 ? 0 : i))); break;
        default: script.push_back(command_at(t));
      }
    }
    // Make sure every commit is eventually announced or requested.
    script.push_back(hook_at(t + 1, "final"));
    script.push_back(command_at(t + 1));

    const auto a = replay(project(policy, sleeper(duration)), script);
    const auto b = replay(project(policy, sleeper(duration)), script);
    CHECK(a.runs == b.runs);
    CHECK(a.queue_depth == b.queue_depth);

    std::map<std::uint64_t, int> built;
    for (std::size_t i = 0; i < a.runs.size(); ++i) {
      const auto& r = a.runs[i];
      CHECK(r.ended_at - r.started_at == Duration{duration});
      if (i > 0) {
        CHECK(r.started_at >= a.runs[i - 1].ended_at);
        CHECK(r.request.target_revision.seq >= a.runs[i - 1].request.target_revision.seq);
      }
      for (auto seq : seqs(r)) {
        ++built[seq];
        CHECK(seq <= r.request.target_revision.seq);
      }
    }
    CHECK(built.size() == commits);
    for (const auto& [seq, times] : built) CHECK(times == 1);
    if (!a.runs.empty()) {
      CHECK(a.state.last_integrated == a.runs.back().request.target_revision);
    }
    CHECK(a.state.last_integrated.seq == commits);
    CHECK(queue_depth(a.state) == 0);
  }
}
