#include "buildherd/history.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "buildherd/codec.hpp"
#include "buildherd/error.hpp"

namespace buildherd {

namespace {

constexpr std::string_view kFormat = "buildherd-history";
constexpr int kVersion = 1;

std::string header_line() {
  return codec::json{{"format", kFormat}, {"version", kVersion}}.dump() + "\n";
}

[[noreturn]] void io_error(const std::string& what) {
  throw Error(ErrorCode::kStorageIo, what + ": " + std::strerror(errno));
}

void write_all(int fd, std::string_view data, const std::filesystem::path& path) {
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      io_error("cannot write " + path.string());
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

// Complete lines only; a trailing fragment without '\n' is reported through
// `complete_bytes`.
std::vector<BuildRun> parse_history(const std::string& content, const std::filesystem::path& path,
                                    std::size_t* complete_bytes) {
  std::vector<BuildRun> runs;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < content.size()) {
    const auto nl = content.find('\n', pos);
    if (nl == std::string::npos) break;
    const std::string_view line(content.data() + pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    const auto j = codec::parse(line);
    if (!header_seen) {
      if (!j.is_object() || j.value("format", "") != kFormat || j.value("version", 0) != kVersion) {
        throw Error(ErrorCode::kParse, path.string() + " is not a buildherd history file");
      }
      header_seen = true;
      continue;
    }
    runs.push_back(codec::run_from_json(j));
  }
  if (complete_bytes) *complete_bytes = pos;
  if (!header_seen && pos > 0) {
    throw Error(ErrorCode::kParse, path.string() + " has no history header");
  }
  return runs;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kStorageIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

MetricsReport metrics(std::span<const BuildRun> runs, std::span<const QueueSample> queue_depth) {
  MetricsReport r;
  r.n_builds = runs.size();
  std::int64_t total = 0;
  Duration worst{0};
  for (const auto& run : runs) {
    for (const auto& change : run.request.changes) {
      const auto latency = feedback_latency(run, change);
      total += latency.count();
      worst = std::max(worst, latency);
      ++r.n_changes;
    }
  }
  if (r.n_changes > 0) {
    r.mean_latency = Duration{total / static_cast<std::int64_t>(r.n_changes)};
    r.max_latency = worst;
  }
  for (const auto& s : queue_depth) r.max_queue_depth = std::max(r.max_queue_depth, s.depth);
  return r;
}

bool HistoryFilter::matches(const BuildRun& run) const {
  if (project && run.project != *project) return false;
  if (from && run.ended_at < *from) return false;
  if (to && run.ended_at > *to) return false;
  if (outcome && outcome_kind(run.outcome) != *outcome) return false;
  return true;
}

HistoryStore::HistoryStore(std::filesystem::path path) : path_(std::move(path)) {
  fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) io_error("cannot open " + path_.string());

  struct stat st {};
  if (::fstat(fd_, &st) != 0) io_error("cannot stat " + path_.string());

  try {
    if (st.st_size == 0) {
      write_all(fd_, header_line(), path_);
      if (::fsync(fd_) != 0) io_error("cannot sync " + path_.string());
      return;
    }
    const auto content = slurp(path_);
    std::size_t complete = 0;
    runs_ = parse_history(content, path_, &complete);
    if (complete < content.size() && ::ftruncate(fd_, static_cast<off_t>(complete)) != 0) {
      io_error("cannot cut torn record from " + path_.string());
    }
  } catch (...) {
    ::close(fd_);
    throw;
  }
}

HistoryStore::~HistoryStore() {
  if (fd_ >= 0) ::close(fd_);
}

void HistoryStore::append(const BuildRun& run) {
  std::lock_guard lock(mu_);
  if (!runs_.empty() && run.run_id <= runs_.back().run_id) {
    throw Error(ErrorCode::kDuplicateRunId,
                "run " + std::to_string(run.run_id) + " is not newer than stored run " +
                    std::to_string(runs_.back().run_id));
  }
  // One write per record keeps readers from seeing half a line.
  write_all(fd_, codec::to_json(run).dump() + "\n", path_);
  if (::fsync(fd_) != 0) io_error("cannot sync " + path_.string());
  runs_.push_back(run);
}

std::vector<BuildRun> HistoryStore::query(const HistoryFilter& filter) const {
  std::lock_guard lock(mu_);
  std::vector<BuildRun> out;
  std::copy_if(runs_.begin(), runs_.end(), std::back_inserter(out),
               [&](const BuildRun& r) { return filter.matches(r); });
  return out;
}

std::uint64_t HistoryStore::last_run_id() const {
  std::lock_guard lock(mu_);
  return runs_.empty() ? 0 : runs_.back().run_id;
}

std::vector<BuildRun> read_history(const std::filesystem::path& path) {
  return parse_history(slurp(path), path, nullptr);
}

}  // namespace buildherd
