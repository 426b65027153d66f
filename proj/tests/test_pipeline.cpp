#include <filesystem>
#include <random>

#include "doctest.h"

#include "buildherd/error.hpp"
#include "buildherd/pipeline.hpp"
#include "pipeline_oracle.hpp"

using namespace buildherd;
using namespace buildherd::testgen;

namespace {

BuildRequest request() {
  return BuildRequest{Commanded{"alice"}, {}, Revision{"x", 0}, Instant{}};
}

std::filesystem::path workspace() { return std::filesystem::temp_directory_path(); }

bool mentions(const std::vector<std::string>& v, std::string_view needle) {
  for (const auto& s : v) {
    if (s.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("validate_definition") {
  BuildDefinition good{"p", {stub("compile", true), stub("test", true), stub("package", true)}};
  CHECK(validate_definition(good).empty());

  const auto empty = validate_definition(BuildDefinition{"p", {}});
  REQUIRE(empty.size() == 1);
  CHECK(empty[0] == "definition has no steps");

  BuildDefinition back{"p", {stub("a", true), stub("b", true), stub("c", true, Goto{"a"})}};
  CHECK(mentions(validate_definition(back), "backward goto"));

  BuildDefinition self{"p", {stub("a", false, Continue{}, Goto{"a"})}};
  CHECK(mentions(validate_definition(self), "backward goto"));

  BuildDefinition missing{"p", {stub("a", true, Goto{"nowhere"})}};
  CHECK(mentions(validate_definition(missing), "does not exist"));

  BuildDefinition dup{"p", {stub("a", true), stub("a", true)}};
  CHECK(mentions(validate_definition(dup), "duplicate step name"));
}

TEST_CASE("plan_next follows the continuation of the finished step") {
  BuildDefinition def{"p",
                      {stub("compile", true, Continue{}, Goto{"report"}), stub("test", true),
                       stub("report", true)}};

  CHECK(plan_next(def, 0, Succeeded{}) == NextStep{std::size_t{1}});
  CHECK(plan_next(def, 1, Failed{1}) == NextStep{Stop{false}});
  CHECK(plan_next(def, 0, Failed{2}) == NextStep{std::size_t{2}});
  CHECK(plan_next(def, 2, Succeeded{}) == NextStep{Stop{true}});

  BuildDefinition anyway{"p", {stub("a", false, Continue{}, ContinueAnyway{}),
                               stub("b", false, StopSuccess{}, ContinueAnyway{})}};
  CHECK(plan_next(anyway, 0, Failed{1}) == NextStep{std::size_t{1}});
  CHECK(plan_next(anyway, 1, Failed{1}) == NextStep{Stop{false}});
  CHECK(plan_next(anyway, 1, Succeeded{}) == NextStep{Stop{true}});

  try {
    plan_next(def, 3, Succeeded{});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIndexOutOfRange);
  }
}

TEST_CASE("run_pipeline with stub steps") {
  SimulatedClock clock(from_ms(100));

  SUBCASE("all succeed") {
    BuildDefinition def{"p", {stub("a", true, Continue{}, Halt{}, 3), stub("b", true, Continue{}, Halt{}, 4)}};
    const auto run = run_pipeline(def, request(), workspace(), clock);
    CHECK(run.outcome == Outcome{Success{}});
    CHECK(run.step_results.size() == 2);
    CHECK(run.started_at == from_ms(100));
    CHECK(run.ended_at == from_ms(107));
    CHECK(run.step_results[1].duration == Duration{4});
  }
  SUBCASE("failure halts") {
    BuildDefinition def{"p", {stub("a", true), stub("b", false), stub("c", true)}};
    const auto run = run_pipeline(def, request(), workspace(), clock);
    CHECK(run.outcome == Outcome{FailedAt{"b"}});
    CHECK(names(run) == std::vector<std::string>{"a", "b"});
  }
  SUBCASE("failure jumps to report") {
    BuildDefinition def{"p", {stub("compile", false, Continue{}, Goto{"report"}), stub("unit-test", true),
                              stub("report", true)}};
    const auto run = run_pipeline(def, request(), workspace(), clock);
    CHECK(run.outcome == Outcome{FailedAt{"compile"}});
    CHECK(names(run) == std::vector<std::string>{"compile", "report"});
    CHECK(is_failure(run.step_results[0].status));
    CHECK_FALSE(is_failure(run.step_results[1].status));
  }
  SUBCASE("continue anyway still fails the run") {
    BuildDefinition def{"p", {stub("lint", false, Continue{}, ContinueAnyway{}), stub("build", true)}};
    const auto run = run_pipeline(def, request(), workspace(), clock);
    CHECK(run.outcome == Outcome{FailedAt{"lint"}});
    CHECK(run.step_results.size() == 2);
  }
}

TEST_CASE("run_pipeline runs real commands in the workspace") {
  SystemClock clock;
  const auto dir = std::filesystem::temp_directory_path() / "buildherd-pipeline-test";
  std::filesystem::create_directories(dir);

  BuildDefinition def{"p",
                      {BuildStep{"write", ExecCommand{{"sh", "-c", "echo $BUILDHERD_TARGET_SEQ > seq.txt; echo hello"}}},
                       BuildStep{"check", ExecCommand{{"sh", "-c", "cat seq.txt; exit 3"}}}}};
  auto req = request();
  req.target_revision = Revision{"abc", 42};
  const auto run = run_pipeline(def, req, dir, clock);
  CHECK(run.outcome == Outcome{FailedAt{"check"}});
  REQUIRE(run.step_results.size() == 2);
  CHECK(run.step_results[0].captured_output == "hello\n");
  CHECK(run.step_results[1].captured_output == "42\n");
  CHECK(run.step_results[1].status == StepStatus{Failed{3}});
}

TEST_CASE("a program that cannot be spawned errors the run") {
  SystemClock clock;
  BuildDefinition def{"p", {stub("ok", true), BuildStep{"ghost", ExecCommand{{"/nonexistent/buildherd-ghost"}}}}};
  const auto run = run_pipeline(def, request(), workspace(), clock);
  REQUIRE(std::holds_alternative<Errored>(run.outcome));
  CHECK(std::get<Errored>(run.outcome).reason.find("cannot spawn") != std::string::npos);
  CHECK(run.step_results.size() == 1);
}

TEST_CASE("captured output is capped and flagged") {
  SystemClock clock;
  BuildDefinition def{"p", {BuildStep{"noisy", ExecCommand{{"sh", "-c", "head -c 5000 /dev/zero"}}}}};
  const auto run = run_pipeline(def, request(), workspace(), clock, PipelineOptions{1000});
  REQUIRE(run.step_results.size() == 1);
  CHECK(run.step_results[0].captured_output.size() == 1000);
  CHECK(run.step_results[0].output_truncated);
  CHECK(run.outcome == Outcome{Success{}});
}

TEST_CASE("executed steps match the naive goto walk on random definitions") {
  std::mt19937 rng(2024);
  for (int i = 0; i < 300; ++i) {
    const auto def = random_definition(rng);
    REQUIRE(validate_definition(def).empty());
    SimulatedClock clock;
    const auto run = run_pipeline(def, request(), workspace(), clock);
    const auto expected = naive_walk(def);
    CHECK(names(run) == expected);
    CHECK(run.step_results.size() <= def.steps.size());

    bool any_failed = false;
    for (const auto& r : run.step_results) any_failed |= is_failure(r.status);
    CHECK(std::holds_alternative<Success>(run.outcome) == !any_failed);

    SimulatedClock again;
    CHECK(run_pipeline(def, request(), workspace(), again) == run);
  }
}
