#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "buildherd/codec.hpp"
#include "buildherd/history.hpp"
#include "buildherd/orchestrator.hpp"
#include "buildherd/pipeline.hpp"
#include "buildherd/time.hpp"
#include "buildherd/vcs.hpp"

namespace buildherd {

struct RepoConfig {
  enum class Adapter { kInMemory, kDirectoryHash };

  std::string id;
  Adapter adapter = Adapter::kInMemory;
  std::filesystem::path root;      // directory adapter only
  std::filesystem::path manifest;  // directory adapter only
};

struct ProjectConfig {
  std::string id;
  RepoConfig repo;
  TriggerPolicy policy;
  std::vector<BuildStep> steps;
};

struct ServiceConfig {
  std::string listen = "127.0.0.1:8080";
  std::filesystem::path history = "buildherd-history.jsonl";
  std::filesystem::path workspace_root = "buildherd-work";
  std::vector<ProjectConfig> projects;
};

// Relative paths are resolved against `base_dir`. Throws kParse for
// malformed documents and kInvalidPolicy / kInvalidDefinition /
// kInvalidArgument for documents that parse but violate the contract.
ServiceConfig config_from_json(const nlohmann::json& j,
                               const std::filesystem::path& base_dir = {});
ServiceConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ServiceConfig& config);

RepositoryHandle open_repository(const RepoConfig& repo);
BuildDefinition definition_of(const ProjectConfig& project);

struct ProjectStatus {
  std::string project;
  ClassificationLabel label;
  std::size_t queue_depth = 0;
  bool running = false;
  Revision last_integrated;
  std::optional<BuildRun> last_run;
};

// The long-running CI server: one event-loop thread owns every ProjectState,
// producers (HTTP handlers, the CLI) enqueue events, and each started build
// runs on its own worker thread that reports back with BuildFinished.
class CiServer {
 public:
  explicit CiServer(ServiceConfig config,
                    std::shared_ptr<Clock> clock = std::make_shared<SystemClock>());
  ~CiServer();

  CiServer(const CiServer&) = delete;
  CiServer& operator=(const CiServer&) = delete;

  void start();
  void stop();

  struct HookReceipt {
    bool duplicate = false;
  };
  // nullopt when no project watches `n.repo_id`.
  std::optional<HookReceipt> accept_hook(const HookNotification& n);

  // Receipt number, or nullopt for an unknown project.
  std::optional<std::uint64_t> accept_command(const std::string& project, const std::string& actor);

  std::optional<ProjectStatus> status(const std::string& project) const;
  std::vector<BuildRun> runs(const HistoryFilter& filter) const;
  bool has_project(const std::string& project) const;
  bool has_repo(const std::string& repo_id) const;
  std::optional<RepositoryHandle> repository(const std::string& repo_id) const;
  Instant now() const { return clock_->now(); }

  // Blocks until no event is queued and every project is quiescent.
  bool wait_idle(Duration timeout);

 private:
  void loop();
  void enqueue(std::vector<Event> events);
  void process(const Event& event);
  void dispatch(const std::string& project, Transition t);
  void start_worker(const std::string& project, BuildRequest request);
  bool idle_locked() const;

  ServiceConfig config_;
  std::shared_ptr<Clock> clock_;
  HistoryStore history_;
  std::map<std::string, RepositoryHandle> repos_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::map<std::string, ProjectState> projects_;
  std::map<std::string, std::set<std::string>> seen_nonces_;  // per repo
  std::deque<Event> events_;
  std::map<std::string, std::thread> workers_;
  std::optional<Instant> last_event_at_;
  std::uint64_t next_run_id_ = 1;
  std::uint64_t next_receipt_ = 1;
  bool stopping_ = false;
  std::thread loop_thread_;
};

}  // namespace buildherd
