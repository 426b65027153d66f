#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "buildherd/model.hpp"
#include "buildherd/orchestrator.hpp"

namespace buildherd {

struct MetricsReport {
  std::uint64_t n_builds = 0;
  std::uint64_t n_changes = 0;
  // Absent when no change was built.
  std::optional<Duration> mean_latency;  // floored to whole milliseconds
  std::optional<Duration> max_latency;
  std::size_t max_queue_depth = 0;

  // changes_per_build as the exact ratio n_changes / n_builds.
  double changes_per_build() const {
    return n_builds == 0 ? 0.0 : static_cast<double>(n_changes) / static_cast<double>(n_builds);
  }

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

MetricsReport metrics(std::span<const BuildRun> runs, std::span<const QueueSample> queue_depth);

struct HistoryFilter {
  std::optional<std::string> project;
  // Inclusive bounds on ended_at.
  std::optional<Instant> from;
  std::optional<Instant> to;
  std::optional<std::string> outcome;  // "success" | "failed" | "errored"

  bool matches(const BuildRun& run) const;
};

// Append-only JSON-lines run log. The first line is a format header; every
// following line is one complete run, fsync'ed before append returns.
class HistoryStore {
 public:
  // Creates the file with its header when missing. A torn trailing line left
  // by a crash is cut off.
  explicit HistoryStore(std::filesystem::path path);
  ~HistoryStore();

  HistoryStore(const HistoryStore&) = delete;
  HistoryStore& operator=(const HistoryStore&) = delete;

  // Throws kDuplicateRunId unless run_id exceeds every stored id, kStorageIo
  // on write failure.
  void append(const BuildRun& run);

  std::vector<BuildRun> query(const HistoryFilter& filter = {}) const;
  std::uint64_t last_run_id() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  mutable std::mutex mu_;
  std::vector<BuildRun> runs_;
};

// Reads a history file without opening it for writing.
std::vector<BuildRun> read_history(const std::filesystem::path& path);

}  // namespace buildherd
