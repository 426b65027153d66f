#include "buildherd/server.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "buildherd/codec.hpp"
#include "buildherd/detail/overloaded.hpp"
#include "buildherd/error.hpp"

namespace buildherd {

namespace fs = std::filesystem;
using detail::overloaded;
using codec::json;

// ---------------------------------------------------------------------------
// Config

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

RepoConfig repo_from_json(const json& j, const fs::path& base) {
  RepoConfig r;
  r.id = j.at("id").get<std::string>();
  const auto adapter = j.value("adapter", std::string("in_memory"));
  if (adapter == "in_memory") {
    r.adapter = RepoConfig::Adapter::kInMemory;
  } else if (adapter == "directory_hash") {
    r.adapter = RepoConfig::Adapter::kDirectoryHash;
    r.root = resolve(base, j.at("root").get<std::string>());
    r.manifest = j.contains("manifest") ? resolve(base, j.at("manifest").get<std::string>())
                                        : fs::path(r.root.string() + ".manifest");
  } else {
    throw Error(ErrorCode::kParse, "unknown repository adapter '" + adapter + "'");
  }
  return r;
}

json repo_to_json(const RepoConfig& r) {
  if (r.adapter == RepoConfig::Adapter::kInMemory) return {{"id", r.id}, {"adapter", "in_memory"}};
  return {{"id", r.id},
          {"adapter", "directory_hash"},
          {"root", r.root.string()},
          {"manifest", r.manifest.string()}};
}

}  // namespace

ServiceConfig config_from_json(const json& j, const fs::path& base_dir) {
  ServiceConfig c;
  try {
    c.listen = j.value("listen", c.listen);
    c.history = resolve(base_dir, j.value("history", c.history.string()));
    c.workspace_root = resolve(base_dir, j.value("workspace_root", c.workspace_root.string()));
    for (const auto& pj : j.at("projects")) {
      ProjectConfig p;
      p.id = pj.at("id").get<std::string>();
      p.repo = repo_from_json(pj.at("repo"), base_dir);
      p.policy = codec::policy_from_json(pj.at("policy"));
      p.steps = codec::steps_from_json(pj.at("steps"));
      c.projects.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed config: ") + e.what());
  }

  std::set<std::string> ids;
  std::map<std::string, const RepoConfig*> repos;
  for (const auto& p : c.projects) {
    if (p.id.empty()) throw Error(ErrorCode::kInvalidArgument, "project with empty id");
    if (!ids.insert(p.id).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate project id '" + p.id + "'");
    }
    if (auto v = validate_policy(p.policy); !v.empty()) {
      throw Error(ErrorCode::kInvalidPolicy, "project " + p.id + ": " + v.front());
    }
    if (auto v = validate_definition(definition_of(p)); !v.empty()) {
      throw Error(ErrorCode::kInvalidDefinition, "project " + p.id + ": " + v.front());
    }
    auto [it, fresh] = repos.emplace(p.repo.id, &p.repo);
    if (!fresh && (it->second->adapter != p.repo.adapter || it->second->root != p.repo.root)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "repository '" + p.repo.id + "' is configured differently by two projects");
    }
  }
  return c;
}

ServiceConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kStorageIo, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(codec::parse(ss.str()), path.parent_path());
}

json config_to_json(const ServiceConfig& c) {
  json projects = json::array();
  for (const auto& p : c.projects) {
    projects.push_back({{"id", p.id},
                        {"repo", repo_to_json(p.repo)},
                        {"policy", codec::to_json(p.policy)},
                        {"steps", codec::steps_to_json(p.steps)}});
  }
  return {{"listen", c.listen},
          {"history", c.history.string()},
          {"workspace_root", c.workspace_root.string()},
          {"projects", projects}};
}

RepositoryHandle open_repository(const RepoConfig& repo) {
  if (repo.adapter == RepoConfig::Adapter::kInMemory) return make_in_memory(repo.id);
  return make_directory_hash(repo.id, repo.root, repo.manifest);
}

BuildDefinition definition_of(const ProjectConfig& project) {
  return BuildDefinition{project.id, project.steps};
}

// ---------------------------------------------------------------------------
// CiServer

CiServer::CiServer(ServiceConfig config, std::shared_ptr<Clock> clock)
    : config_(std::move(config)), clock_(std::move(clock)), history_(config_.history) {
  next_run_id_ = history_.last_run_id() + 1;
  const Instant start = clock_->now();

  for (const auto& p : config_.projects) {
    auto it = repos_.find(p.repo.id);
    if (it == repos_.end()) it = repos_.emplace(p.repo.id, open_repository(p.repo)).first;

    auto state = make_project(p.id, p.policy, definition_of(p), it->second, start);

    // Resume from the newest integration the history knows about.
    HistoryFilter filter;
    filter.project = p.id;
    const auto past = history_.query(filter);
    for (auto r = past.rbegin(); r != past.rend(); ++r) {
      if (std::holds_alternative<Errored>(r->outcome)) continue;
      try {
        changes_since(state.repo, r->request.target_revision);
        state.last_integrated = r->request.target_revision;
        state.claimed = state.last_integrated;
      } catch (const Error&) {
        // Repository no longer knows that revision; start from head.
      }
      break;
    }
    projects_.emplace(p.id, std::move(state));
  }
}

CiServer::~CiServer() { stop(); }

void CiServer::start() {
  std::lock_guard lock(mu_);
  if (loop_thread_.joinable()) return;
  stopping_ = false;
  loop_thread_ = std::thread([this] { loop(); });
}

void CiServer::stop() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  if (loop_thread_.joinable()) loop_thread_.join();

  std::map<std::string, std::thread> workers;
  {
    std::lock_guard lock(mu_);
    workers.swap(workers_);
  }
  for (auto& [name, t] : workers) {
    if (t.joinable()) t.join();
  }
}

void CiServer::enqueue(std::vector<Event> events) {
  {
    std::lock_guard lock(mu_);
    for (auto& e : events) events_.push_back(std::move(e));
  }
  cv_.notify_all();
}

std::optional<CiServer::HookReceipt> CiServer::accept_hook(const HookNotification& n) {
  std::unique_lock lock(mu_);
  if (!repos_.contains(n.repo_id)) return std::nullopt;
  if (!seen_nonces_[n.repo_id].insert(n.nonce).second) return HookReceipt{true};
  HookNotification stamped = n;
  Instant at = std::max(clock_->now(), last_event_at_.value_or(Instant::min()));
  last_event_at_ = at;
  stamped.received_at = at;
  events_.push_back(Event{at, HookReceived{std::move(stamped)}});
  lock.unlock();
  cv_.notify_all();
  return HookReceipt{false};
}

std::optional<std::uint64_t> CiServer::accept_command(const std::string& project,
                                                      const std::string& actor) {
  std::unique_lock lock(mu_);
  if (!projects_.contains(project)) return std::nullopt;
  const auto receipt = next_receipt_++;
  Instant at = std::max(clock_->now(), last_event_at_.value_or(Instant::min()));
  last_event_at_ = at;
  events_.push_back(Event{at, CommandReceived{actor, project}});
  lock.unlock();
  cv_.notify_all();
  return receipt;
}

std::optional<ProjectStatus> CiServer::status(const std::string& project) const {
  std::lock_guard lock(mu_);
  const auto it = projects_.find(project);
  if (it == projects_.end()) return std::nullopt;
  const auto& s = it->second;
  ProjectStatus st;
  st.project = project;
  st.label = classify(s.policy);
  st.queue_depth = queue_depth(s);
  st.running = s.running.has_value();
  st.last_integrated = s.last_integrated;
  HistoryFilter filter;
  filter.project = project;
  auto past = history_.query(filter);
  if (!past.empty()) st.last_run = std::move(past.back());
  return st;
}

std::vector<BuildRun> CiServer::runs(const HistoryFilter& filter) const {
  return history_.query(filter);
}

bool CiServer::has_project(const std::string& project) const {
  std::lock_guard lock(mu_);
  return projects_.contains(project);
}

bool CiServer::has_repo(const std::string& repo_id) const {
  std::lock_guard lock(mu_);
  return repos_.contains(repo_id);
}

std::optional<RepositoryHandle> CiServer::repository(const std::string& repo_id) const {
  std::lock_guard lock(mu_);
  const auto it = repos_.find(repo_id);
  if (it == repos_.end()) return std::nullopt;
  return it->second;
}

bool CiServer::idle_locked() const {
  if (!events_.empty()) return false;
  return std::all_of(projects_.begin(), projects_.end(),
                     [](const auto& kv) { return is_quiescent(kv.second); });
}

bool CiServer::wait_idle(Duration timeout) {
  std::unique_lock lock(mu_);
  return idle_cv_.wait_for(lock, timeout, [this] { return idle_locked(); });
}

void CiServer::loop() {
  std::unique_lock lock(mu_);
  while (!stopping_) {
    std::optional<Instant> wake;
    for (const auto& [id, s] : projects_) {
      if (auto w = next_wakeup(s); w && (!wake || *w < *wake)) wake = w;
    }
    if (events_.empty()) {
      Duration wait{200};
      if (wake) wait = std::clamp(*wake - clock_->now(), Duration{0}, wait);
      if (wait > Duration::zero()) {
        cv_.wait_for(lock, wait, [this] { return stopping_ || !events_.empty(); });
      }
      if (stopping_) break;
    }

    std::deque<Event> batch;
    batch.swap(events_);
    Instant now = std::max(clock_->now(), last_event_at_.value_or(Instant::min()));
    for (const auto& e : batch) now = std::max(now, e.at);
    last_event_at_ = now;
    batch.push_back(Event{now, ClockAdvanced{}});

    for (const auto& e : batch) process(e);
    idle_cv_.notify_all();
  }
}

void CiServer::process(const Event& event) {
  std::vector<std::string> targets;
  std::visit(overloaded{
                 [&](const ClockAdvanced&) {
                   for (const auto& [id, s] : projects_) targets.push_back(id);
                 },
                 [&](const HookReceived& h) {
                   for (const auto& [id, s] : projects_) {
                     if (s.repo.repo_id == h.notification.repo_id) targets.push_back(id);
                   }
                 },
                 [&](const CommandReceived& c) { targets.push_back(c.project_id); },
                 [&](const BuildFinished& f) { targets.push_back(f.run.project); },
             },
             event.payload);

  for (const auto& id : targets) {
    auto it = projects_.find(id);
    if (it == projects_.end()) {
      std::cerr << "buildherd: event for unknown project " << id << '\n';
      continue;
    }
    if (std::holds_alternative<BuildFinished>(event.payload)) {
      // The worker posted this event as its last act.
      if (auto w = workers_.find(id); w != workers_.end()) {
        if (w->second.joinable()) w->second.join();
        workers_.erase(w);
      }
    }
    dispatch(id, step(std::move(it->second), event));
  }
}

void CiServer::dispatch(const std::string& project, Transition t) {
  projects_[project] = std::move(t.state);
  for (auto& action : t.actions) {
    std::visit(overloaded{
                   [&](StartBuild& sb) { start_worker(project, std::move(sb.request)); },
                   [&](RecordRun& rr) {
                     // Numbered on completion: builds of different projects
                     // finish out of start order, and ids must grow in the log.
                     rr.run.run_id = next_run_id_++;
                     try {
                       history_.append(rr.run);
                     } catch (const Error& e) {
                       std::cerr << "buildherd: cannot record run " << rr.run.run_id << ": "
                                 << e.what() << '\n';
                     }
                   },
                   [&](Rejected& r) { std::cerr << "buildherd: " << project << ": " << r.reason << '\n'; },
                   [&](Degraded& d) { std::cerr << "buildherd: " << project << ": " << d.reason << '\n'; },
               },
               action);
  }
}

void CiServer::start_worker(const std::string& project, BuildRequest request) {
  const auto& def = projects_.at(project).definition;
  const fs::path workspace = config_.workspace_root / project;

  workers_[project] = std::thread([this, def, request = std::move(request), workspace] {
    BuildRun run;
    std::error_code ec;
    fs::create_directories(workspace, ec);
    if (ec) {
      run.project = def.project_id;
      run.request = request;
      run.started_at = run.ended_at = clock_->now();
      run.outcome = Errored{"cannot create workspace " + workspace.string() + ": " + ec.message()};
    } else {
      run = run_pipeline(def, request, workspace, *clock_);
    }
    {
      std::lock_guard lock(mu_);
      Instant at = std::max(clock_->now(), last_event_at_.value_or(Instant::min()));
      last_event_at_ = at;
      events_.push_back(Event{at, BuildFinished{std::move(run)}});
    }
    cv_.notify_all();
  });
}

}  // namespace buildherd
