#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "buildherd/history.hpp"
#include "buildherd/model.hpp"
#include "buildherd/orchestrator.hpp"

namespace buildherd {

struct TraceCommit {
  Instant at;
  std::string author;
  std::vector<std::string> paths;

  friend bool operator==(const TraceCommit&, const TraceCommit&) = default;
};

using CommitTrace = std::vector<TraceCommit>;

struct SimBuild {
  std::string cause;  // cause_kind of the request
  Instant start;
  Instant end;
  std::vector<std::uint64_t> change_seqs;
  std::uint64_t target_seq = 0;

  friend bool operator==(const SimBuild&, const SimBuild&) = default;
};

struct SimReport {
  MetricsReport metrics;
  std::vector<SimBuild> builds;
  std::vector<QueueSample> queue_depth;

  friend bool operator==(const SimReport&, const SimReport&) = default;
};

struct SimOptions {
  Duration build_duration{0};
  // Required for scheduled policies, which never go quiet on their own.
  std::optional<Instant> horizon;
};

// Drives the production state machine over an in-memory repository fed by
// the trace. Hooked policies get one notification per commit; polled ones
// poll every interval from t = 0. Throws kInvalidPolicy for levered or
// invalid policies, kInvalidArgument for a bad trace or options.
SimReport simulate(const CommitTrace& trace, const TriggerPolicy& policy, const SimOptions& options);

// Independent reference: walks the clock one millisecond at a time and
// applies the trigger rules literally. Must agree with simulate exactly.
SimReport brute_force_replay(const CommitTrace& trace, const TriggerPolicy& policy,
                             const SimOptions& options);

// JSON lines: {"t_ms":int,"author":string,"paths":[string]}
CommitTrace read_trace(std::istream& in);
void write_trace(std::ostream& out, const CommitTrace& trace);

}  // namespace buildherd
