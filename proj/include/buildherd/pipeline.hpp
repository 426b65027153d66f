#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "buildherd/model.hpp"
#include "buildherd/time.hpp"

namespace buildherd {

// External program, looked up on PATH and run inside the workspace.
struct ExecCommand {
  std::vector<std::string> argv;
  friend bool operator==(const ExecCommand&, const ExecCommand&) = default;
};

// In-process stand-in for a real command: waits `duration` on the run's
// clock, then succeeds or fails.
struct StubCommand {
  bool succeed = true;
  Duration duration{0};
  int exit_code = 1;
  std::string output;
  friend bool operator==(const StubCommand&, const StubCommand&) = default;
};

using StepCommand = std::variant<ExecCommand, StubCommand>;

struct Continue {
  friend bool operator==(const Continue&, const Continue&) = default;
};
struct StopSuccess {
  friend bool operator==(const StopSuccess&, const StopSuccess&) = default;
};
struct Halt {
  friend bool operator==(const Halt&, const Halt&) = default;
};
struct ContinueAnyway {
  friend bool operator==(const ContinueAnyway&, const ContinueAnyway&) = default;
};
struct Goto {
  std::string step;
  friend bool operator==(const Goto&, const Goto&) = default;
};

using OnSuccess = std::variant<Continue, Goto, StopSuccess>;
using OnFailure = std::variant<Halt, Goto, ContinueAnyway>;

struct BuildStep {
  std::string name;
  StepCommand command;
  OnSuccess on_success = Continue{};
  OnFailure on_failure = Halt{};

  friend bool operator==(const BuildStep&, const BuildStep&) = default;
};

struct BuildDefinition {
  std::string project_id;
  std::vector<BuildStep> steps;

  friend bool operator==(const BuildDefinition&, const BuildDefinition&) = default;
};

// Gotos must point strictly forward, so every execution visits each step at
// most once.
std::vector<std::string> validate_definition(const BuildDefinition& def);

struct Stop {
  bool success = true;
  friend bool operator==(const Stop&, const Stop&) = default;
};

using NextStep = std::variant<std::size_t, Stop>;

// Continuation after step `current_index` finished with `status`.
// Throws kIndexOutOfRange.
NextStep plan_next(const BuildDefinition& def, std::size_t current_index,
                   const StepStatus& status);

inline constexpr std::size_t kDefaultOutputCap = 1u << 20;

struct PipelineOptions {
  std::size_t output_cap = kDefaultOutputCap;
};

// Runs the definition to completion. The returned run has run_id 0; the
// caller numbers it. Never throws for step failures: a command that cannot
// be spawned yields an Errored outcome.
BuildRun run_pipeline(const BuildDefinition& def, const BuildRequest& request,
                      const std::filesystem::path& workspace, Clock& clock,
                      const PipelineOptions& options = {});

}  // namespace buildherd
