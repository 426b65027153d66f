#include "buildherd/service.hpp"

#include <charconv>

#include "httplib.h"

#include "buildherd/codec.hpp"
#include "buildherd/error.hpp"

namespace buildherd {

using codec::json;

namespace {

HttpResponse reply(int status, const json& body) { return {status, body.dump()}; }

HttpResponse error_reply(int status, const std::string& message) {
  return reply(status, json{{"error", message}});
}

std::vector<std::string_view> split_path(std::string_view path) {
  std::vector<std::string_view> parts;
  while (!path.empty()) {
    if (path.front() == '/') {
      path.remove_prefix(1);
      continue;
    }
    const auto slash = path.find('/');
    parts.push_back(path.substr(0, slash));
    if (slash == std::string_view::npos) break;
    path.remove_prefix(slash);
  }
  return parts;
}

std::map<std::string, std::string> parse_query(std::string_view query) {
  std::map<std::string, std::string> out;
  while (!query.empty()) {
    const auto amp = query.find('&');
    const auto pair = query.substr(0, amp);
    const auto eq = pair.find('=');
    if (eq == std::string_view::npos) {
      out[std::string(pair)] = "";
    } else {
      out[std::string(pair.substr(0, eq))] = std::string(pair.substr(eq + 1));
    }
    if (amp == std::string_view::npos) break;
    query.remove_prefix(amp + 1);
  }
  return out;
}

json run_summary(const BuildRun& run) {
  return {{"run_id", run.run_id},
          {"cause", cause_kind(run.request.cause)},
          {"outcome", codec::to_json(run.outcome)},
          {"started_at", to_ms(run.started_at)},
          {"ended_at", to_ms(run.ended_at)},
          {"target", codec::to_json(run.request.target_revision)},
          {"n_changes", run.request.changes.size()}};
}

HttpResponse post_hook(CiServer& server, const std::string& repo_id, std::string_view body) {
  if (!server.has_repo(repo_id)) return error_reply(404, "unknown repository " + repo_id);
  HookNotification n;
  try {
    n = codec::hook_from_json(codec::parse(body), server.now());
  } catch (const Error& e) {
    return error_reply(400, e.what());
  }
  if (n.repo_id != repo_id) {
    return error_reply(400, "body names repository " + n.repo_id + ", path names " + repo_id);
  }
  const auto receipt = server.accept_hook(n);
  if (!receipt) return error_reply(404, "unknown repository " + repo_id);
  return reply(202, json{{"accepted", true}, {"repo", repo_id}, {"nonce", n.nonce},
                         {"duplicate", receipt->duplicate}});
}

HttpResponse post_build(CiServer& server, const std::string& project, std::string_view body) {
  if (!server.has_project(project)) return error_reply(404, "unknown project " + project);
  std::string actor = "http";
  if (!body.empty()) {
    try {
      const auto j = codec::parse(body);
      if (!j.is_object()) return error_reply(400, "expected a JSON object");
      if (j.contains("actor")) actor = j.at("actor").get<std::string>();
    } catch (const Error& e) {
      return error_reply(400, e.what());
    } catch (const json::exception& e) {
      return error_reply(400, e.what());
    }
  }
  const auto receipt = server.accept_command(project, actor);
  if (!receipt) return error_reply(404, "unknown project " + project);
  return reply(202, json{{"project", project}, {"receipt", *receipt}, {"actor", actor}});
}

HttpResponse get_status(CiServer& server, const std::string& project) {
  const auto st = server.status(project);
  if (!st) return error_reply(404, "unknown project " + project);
  json body{{"project", st->project},
            {"classification", codec::to_json(st->label)},
            {"queue_depth", st->queue_depth},
            {"running", st->running},
            {"last_integrated", codec::to_json(st->last_integrated)},
            {"last_run", st->last_run ? run_summary(*st->last_run) : json(nullptr)}};
  return reply(200, body);
}

HttpResponse get_runs(CiServer& server, const std::string& project,
                      const std::map<std::string, std::string>& query) {
  if (!server.has_project(project)) return error_reply(404, "unknown project " + project);
  HistoryFilter filter;
  filter.project = project;
  if (auto it = query.find("outcome"); it != query.end()) {
    if (it->second != "success" && it->second != "failed" && it->second != "errored") {
      return error_reply(400, "unknown outcome '" + it->second + "'");
    }
    filter.outcome = it->second;
  }
  std::size_t limit = 0;
  if (auto it = query.find("limit"); it != query.end()) {
    const auto& v = it->second;
    if (std::from_chars(v.data(), v.data() + v.size(), limit).ec != std::errc{}) {
      return error_reply(400, "bad limit '" + v + "'");
    }
  }
  auto runs = server.runs(filter);
  if (limit > 0 && runs.size() > limit) {
    runs.erase(runs.begin(), runs.end() - static_cast<std::ptrdiff_t>(limit));
  }
  json arr = json::array();
  for (const auto& r : runs) arr.push_back(codec::to_json(r));
  return reply(200, json{{"project", project}, {"runs", arr}});
}

}  // namespace

HttpResponse handle_request(CiServer& server, std::string_view method, std::string_view target,
                            std::string_view body) {
  const auto qmark = target.find('?');
  const auto path = target.substr(0, qmark);
  const auto query =
      parse_query(qmark == std::string_view::npos ? std::string_view{} : target.substr(qmark + 1));
  const auto parts = split_path(path);

  auto allow = [&](std::string_view expected) -> std::optional<HttpResponse> {
    if (method == expected) return std::nullopt;
    return error_reply(405, "use " + std::string(expected));
  };

  if (parts.size() == 1 && parts[0] == "health") {
    if (auto r = allow("GET")) return *r;
    return reply(200, json{{"status", "ok"}});
  }
  if (parts.size() == 2 && parts[0] == "hooks") {
    if (auto r = allow("POST")) return *r;
    return post_hook(server, std::string(parts[1]), body);
  }
  if (parts.size() == 3 && parts[0] == "projects") {
    const std::string project(parts[1]);
    if (parts[2] == "build") {
      if (auto r = allow("POST")) return *r;
      return post_build(server, project, body);
    }
    if (parts[2] == "status") {
      if (auto r = allow("GET")) return *r;
      return get_status(server, project);
    }
    if (parts[2] == "runs") {
      if (auto r = allow("GET")) return *r;
      return get_runs(server, project, query);
    }
  }
  return error_reply(404, "no route for " + std::string(path));
}

Endpoint parse_endpoint(std::string_view text) {
  const auto colon = text.rfind(':');
  Endpoint e;
  if (colon == std::string_view::npos || colon == 0) {
    throw Error(ErrorCode::kInvalidArgument, "expected host:port, got '" + std::string(text) + "'");
  }
  e.host = std::string(text.substr(0, colon));
  const auto port = text.substr(colon + 1);
  if (std::from_chars(port.data(), port.data() + port.size(), e.port).ec != std::errc{} ||
      e.port < 0 || e.port > 65535) {
    throw Error(ErrorCode::kInvalidArgument, "bad port in '" + std::string(text) + "'");
  }
  return e;
}

HttpService::HttpService(CiServer& server)
    : server_(server), http_(std::make_unique<httplib::Server>()) {
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    std::string target = req.path;
    if (!req.params.empty()) {
      target += '?';
      bool first = true;
      for (const auto& [k, v] : req.params) {
        if (!first) target += '&';
        target += k + "=" + v;
        first = false;
      }
    }
    const auto out = handle_request(server_, req.method, target, req.body);
    res.status = out.status;
    res.set_content(out.body, "application/json");
  };
  http_->Get(R"(/.*)", route);
  http_->Post(R"(/.*)", route);
  http_->Put(R"(/.*)", route);
  http_->Delete(R"(/.*)", route);
  http_->Patch(R"(/.*)", route);
}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const Endpoint& endpoint) {
  if (endpoint.port == 0) {
    const int port = http_->bind_to_any_port(endpoint.host);
    if (port < 0) throw Error(ErrorCode::kInvalidArgument, "cannot bind " + endpoint.host);
    return port;
  }
  if (!http_->bind_to_port(endpoint.host, endpoint.port)) {
    throw Error(ErrorCode::kInvalidArgument,
                "cannot bind " + endpoint.host + ":" + std::to_string(endpoint.port));
  }
  return endpoint.port;
}

void HttpService::start() {
  thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
}

void HttpService::stop() {
  if (http_) http_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace buildherd
