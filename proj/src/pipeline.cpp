#include "buildherd/pipeline.hpp"

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <optional>
#include <unordered_map>
#include <utility>

#include "buildherd/detail/overloaded.hpp"
#include "buildherd/error.hpp"

extern char** environ;

namespace buildherd {

using detail::overloaded;

std::vector<std::string> validate_definition(const BuildDefinition& def) {
  std::vector<std::string> violations;
  if (def.steps.empty()) {
    violations.emplace_back("definition has no steps");
    return violations;
  }

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < def.steps.size(); ++i) {
    const auto& name = def.steps[i].name;
    if (name.empty()) violations.emplace_back("step " + std::to_string(i) + " has an empty name");
    if (!index.emplace(name, i).second) violations.emplace_back("duplicate step name '" + name + "'");
    if (const auto* exec = std::get_if<ExecCommand>(&def.steps[i].command);
        exec && exec->argv.empty()) {
      violations.emplace_back("step '" + name + "' has an empty command");
    }
  }

  auto check_goto = [&](std::size_t from, const std::string& target) {
    const auto it = index.find(target);
    if (it == index.end()) {
      violations.emplace_back("goto target '" + target + "' from '" + def.steps[from].name +
                              "' does not exist");
    } else if (it->second <= from) {
      violations.emplace_back("backward goto from '" + def.steps[from].name + "' to '" + target +
                              "'");
    }
  };
  for (std::size_t i = 0; i < def.steps.size(); ++i) {
    if (const auto* g = std::get_if<Goto>(&def.steps[i].on_success)) check_goto(i, g->step);
    if (const auto* g = std::get_if<Goto>(&def.steps[i].on_failure)) check_goto(i, g->step);
  }
  return violations;
}

namespace {

std::size_t step_index(const BuildDefinition& def, const std::string& name) {
  for (std::size_t i = 0; i < def.steps.size(); ++i) {
    if (def.steps[i].name == name) return i;
  }
  throw Error(ErrorCode::kInvalidDefinition, "goto target '" + name + "' does not exist");
}

}  // namespace

NextStep plan_next(const BuildDefinition& def, std::size_t current_index,
                   const StepStatus& status) {
  if (current_index >= def.steps.size()) {
    throw Error(ErrorCode::kIndexOutOfRange,
                "step index " + std::to_string(current_index) + " out of range");
  }
  const auto& step = def.steps[current_index];
  const bool last = current_index + 1 == def.steps.size();

  if (!is_failure(status)) {
    return std::visit(overloaded{
                          [&](const Continue&) -> NextStep {
                            if (last) return Stop{true};
                            return current_index + 1;
                          },
                          [&](const Goto& g) -> NextStep { return step_index(def, g.step); },
                          [](const StopSuccess&) -> NextStep { return Stop{true}; },
                      },
                      step.on_success);
  }
  return std::visit(overloaded{
                        [](const Halt&) -> NextStep { return Stop{false}; },
                        [&](const Goto& g) -> NextStep { return step_index(def, g.step); },
                        [&](const ContinueAnyway&) -> NextStep {
                          if (last) return Stop{false};
                          return current_index + 1;
                        },
                    },
                    step.on_failure);
}

namespace {

struct SpawnFailure {
  std::string reason;
};

using StepAttempt = std::variant<StepResult, SpawnFailure>;

void append_capped(std::string& out, bool& truncated, const char* data, std::size_t n,
                   std::size_t cap) {
  const std::size_t room = out.size() < cap ? cap - out.size() : 0;
  out.append(data, std::min(room, n));
  if (n > room) truncated = true;
}

StepAttempt run_stub(const BuildStep& step, const StubCommand& stub, Clock& clock,
                     std::size_t cap) {
  const auto start = clock.now();
  if (stub.duration > Duration::zero()) clock.sleep_for(stub.duration);
  StepResult r;
  r.step_name = step.name;
  r.status = stub.succeed ? StepStatus{Succeeded{}} : StepStatus{Failed{stub.exit_code}};
  append_capped(r.captured_output, r.output_truncated, stub.output.data(), stub.output.size(), cap);
  r.duration = clock.now() - start;
  return r;
}

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Fd() { reset(); }

  int get() const { return fd_; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

std::optional<std::pair<Fd, Fd>> make_pipe() {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) return std::nullopt;
  return std::make_pair(Fd(fds[0]), Fd(fds[1]));
}

StepAttempt run_exec(const BuildStep& step, const ExecCommand& cmd,
                     const std::filesystem::path& workspace, const BuildRequest& request,
                     Clock& clock, std::size_t cap) {
  if (cmd.argv.empty()) return SpawnFailure{"step '" + step.name + "' has an empty command"};

  // Everything the child touches is prepared before fork.
  std::vector<std::string> env_strings;
  for (char** e = environ; e && *e; ++e) env_strings.emplace_back(*e);
  env_strings.push_back("BUILDHERD_TARGET_SEQ=" + std::to_string(request.target_revision.seq));
  env_strings.push_back("BUILDHERD_TARGET_ID=" + request.target_revision.id);
  env_strings.push_back("BUILDHERD_CAUSE=" + cause_kind(request.cause));
  std::vector<char*> envp;
  for (auto& s : env_strings) envp.push_back(s.data());
  envp.push_back(nullptr);

  std::vector<std::string> argv_strings = cmd.argv;
  std::vector<char*> argv;
  for (auto& s : argv_strings) argv.push_back(s.data());
  argv.push_back(nullptr);

  const std::string cwd = workspace.string();

  auto out = make_pipe();
  auto report = make_pipe();
  Fd devnull(::open("/dev/null", O_RDONLY | O_CLOEXEC));
  if (!out || !report || devnull.get() < 0) {
    return SpawnFailure{std::string("cannot create pipes: ") + std::strerror(errno)};
  }

  const auto start = clock.now();
  const pid_t pid = ::fork();
  if (pid < 0) return SpawnFailure{std::string("fork failed: ") + std::strerror(errno)};

  if (pid == 0) {
    int err = 0;
    if (::chdir(cwd.c_str()) != 0 || ::dup2(devnull.get(), STDIN_FILENO) < 0 ||
        ::dup2(out->second.get(), STDOUT_FILENO) < 0 ||
        ::dup2(out->second.get(), STDERR_FILENO) < 0) {
      err = errno;
    } else {
      ::execvpe(argv[0], argv.data(), envp.data());
      err = errno;
    }
    [[maybe_unused]] auto w = ::write(report->second.get(), &err, sizeof err);
    ::_exit(127);
  }

  out->second.reset();
  report->second.reset();

  int child_errno = 0;
  ssize_t n;
  do {
    n = ::read(report->first.get(), &child_errno, sizeof child_errno);
  } while (n < 0 && errno == EINTR);

  if (n == static_cast<ssize_t>(sizeof child_errno)) {
    int ignored;
    ::waitpid(pid, &ignored, 0);
    return SpawnFailure{"cannot spawn '" + cmd.argv.front() + "': " + std::strerror(child_errno)};
  }

  StepResult r;
  r.step_name = step.name;
  char buf[8192];
  for (;;) {
    const ssize_t got = ::read(out->first.get(), buf, sizeof buf);
    if (got < 0 && errno == EINTR) continue;
    if (got <= 0) break;
    append_capped(r.captured_output, r.output_truncated, buf, static_cast<std::size_t>(got), cap);
  }

  int wstatus = 0;
  while (::waitpid(pid, &wstatus, 0) < 0 && errno == EINTR) {
  }
  int code = 0;
  if (WIFEXITED(wstatus)) {
    code = WEXITSTATUS(wstatus);
  } else if (WIFSIGNALED(wstatus)) {
    code = 128 + WTERMSIG(wstatus);
  }
  r.status = code == 0 ? StepStatus{Succeeded{}} : StepStatus{Failed{code}};
  r.duration = clock.now() - start;
  return r;
}

}  // namespace

BuildRun run_pipeline(const BuildDefinition& def, const BuildRequest& request,
                      const std::filesystem::path& workspace, Clock& clock,
                      const PipelineOptions& options) {
  BuildRun run;
  run.project = def.project_id;
  run.request = request;
  run.started_at = clock.now();

  if (auto violations = validate_definition(def); !violations.empty()) {
    run.outcome = Errored{"invalid definition: " + violations.front()};
    run.ended_at = clock.now();
    return run;
  }

  std::optional<std::string> first_failure;
  std::size_t index = 0;
  for (;;) {
    const auto& step = def.steps[index];
    auto attempt = std::visit(
        overloaded{
            [&](const ExecCommand& c) {
              return run_exec(step, c, workspace, request, clock, options.output_cap);
            },
            [&](const StubCommand& s) { return run_stub(step, s, clock, options.output_cap); },
        },
        step.command);

    if (auto* failure = std::get_if<SpawnFailure>(&attempt)) {
      run.outcome = Errored{std::move(failure->reason)};
      run.ended_at = clock.now();
      return run;
    }

    auto& result = std::get<StepResult>(attempt);
    if (is_failure(result.status) && !first_failure) first_failure = step.name;
    const auto next = plan_next(def, index, result.status);
    run.step_results.push_back(std::move(result));
    if (std::holds_alternative<Stop>(next)) break;
    index = std::get<std::size_t>(next);
  }

  run.ended_at = clock.now();
  if (first_failure) {
    run.outcome = FailedAt{*first_failure};
  } else {
    run.outcome = Success{};
  }
  return run;
}

}  // namespace buildherd
