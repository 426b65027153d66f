#include "buildherd/sim.hpp"

#include <istream>
#include <ostream>

#include "buildherd/codec.hpp"
#include "buildherd/detail/sim_checks.hpp"
#include "buildherd/error.hpp"

namespace buildherd {

namespace detail {

// Shared argument checks for simulate and brute_force_replay.
void check_sim_inputs(const CommitTrace& trace, const TriggerPolicy& policy,
                      const SimOptions& options) {
  if (std::holds_alternative<Levered>(policy)) {
    throw Error(ErrorCode::kInvalidPolicy, "a levered policy has no autonomous behaviour to simulate");
  }
  if (auto v = validate_policy(policy); !v.empty()) throw Error(ErrorCode::kInvalidPolicy, v.front());
  if (options.build_duration <= Duration::zero()) {
    throw Error(ErrorCode::kInvalidArgument, "build duration must be positive");
  }
  if (std::holds_alternative<Scheduled>(policy) && !options.horizon) {
    throw Error(ErrorCode::kInvalidArgument, "scheduled simulations need a horizon");
  }
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (trace[i].at < Instant{}) throw Error(ErrorCode::kInvalidArgument, "trace starts before t=0");
    if (i > 0 && trace[i].at < trace[i - 1].at) {
      throw Error(ErrorCode::kInvalidArgument, "trace is not ordered by time");
    }
    if (trace[i].paths.empty()) throw Error(ErrorCode::kEmptyPaths, "trace commit without paths");
  }
}

}  // namespace detail

SimReport simulate(const CommitTrace& trace, const TriggerPolicy& policy, const SimOptions& options) {
  detail::check_sim_inputs(trace, policy, options);

  StubCommand sleep;
  sleep.duration = options.build_duration;
  BuildDefinition def{"sim", {BuildStep{"build", sleep}}};
  auto repo = make_in_memory("sim");
  auto state = make_project("sim", policy, def, repo, Instant{});

  const bool hooked = std::holds_alternative<Triggered>(policy) &&
                      std::holds_alternative<Hooked>(std::get<Triggered>(policy).detection);

  std::vector<ScriptItem> script;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& c = trace[i];
    script.push_back(ScriptItem{c.at, CommitAction{c.author, c.paths}});
    if (hooked) {
      script.push_back(
          ScriptItem{c.at, HookNotification{"sim", c.at, std::nullopt, "sim-" + std::to_string(i)}});
    }
  }

  ReplayOptions ro;
  ro.horizon = options.horizon;
  auto result = replay(std::move(state), script, ro);

  SimReport report;
  report.queue_depth = std::move(result.queue_depth);
  report.metrics = metrics(result.runs, report.queue_depth);
  for (const auto& run : result.runs) {
    SimBuild b;
    b.cause = cause_kind(run.request.cause);
    b.start = run.started_at;
    b.end = run.ended_at;
    for (const auto& c : run.request.changes) b.change_seqs.push_back(c.revision.seq);
    b.target_seq = run.request.target_revision.seq;
    report.builds.push_back(std::move(b));
  }
  return report;
}

CommitTrace read_trace(std::istream& in) {
  CommitTrace trace;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = codec::parse(line);
      trace.push_back(TraceCommit{from_ms(j.at("t_ms").get<std::int64_t>()),
                                  j.at("author").get<std::string>(),
                                  j.at("paths").get<std::vector<std::string>>()});
    } catch (const codec::json::exception& e) {
      throw Error(ErrorCode::kParse, "trace line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::kParse, "trace line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return trace;
}

void write_trace(std::ostream& out, const CommitTrace& trace) {
  for (const auto& c : trace) {
    out << codec::json{{"t_ms", to_ms(c.at)}, {"author", c.author}, {"paths", c.paths}}.dump()
        << '\n';
  }
}

}  // namespace buildherd
