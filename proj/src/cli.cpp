#include "buildherd/cli.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "httplib.h"

#include "buildherd/codec.hpp"
#include "buildherd/error.hpp"
#include "buildherd/history.hpp"
#include "buildherd/server.hpp"
#include "buildherd/service.hpp"
#include "buildherd/sim.hpp"

namespace buildherd {

namespace fs = std::filesystem;
using codec::json;

namespace {

struct OperationFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string default_actor() {
  const char* user = std::getenv("USER");
  return user && *user ? user : "cli";
}

void print_run_line(std::ostream& out, const BuildRun& run) {
  out << "run_id=" << run.run_id << " outcome=" << outcome_kind(run.outcome);
  if (const auto* f = std::get_if<FailedAt>(&run.outcome)) out << " step=" << f->step_name;
  out << " cause=" << cause_kind(run.request.cause) << " target=" << run.request.target_revision.seq
      << " changes=" << run.request.changes.size() << " started_at=" << to_ms(run.started_at)
      << " ended_at=" << to_ms(run.ended_at) << '\n';
}

void print_metrics(std::ostream& out, const MetricsReport& m) {
  auto opt = [](const std::optional<Duration>& d) {
    return d ? std::to_string(d->count()) : std::string("none");
  };
  out << "n_builds=" << m.n_builds << '\n'
      << "n_changes=" << m.n_changes << '\n'
      << "changes_per_build=" << m.n_changes << '/' << m.n_builds << '\n'
      << "mean_latency_ms=" << opt(m.mean_latency) << '\n'
      << "max_latency_ms=" << opt(m.max_latency) << '\n'
      << "max_queue_depth=" << m.max_queue_depth << '\n';
}

json report_to_json(const SimReport& r) {
  const auto& m = r.metrics;
  json metrics{{"n_builds", m.n_builds},
               {"n_changes", m.n_changes},
               {"changes_per_build", {{"numerator", m.n_changes}, {"denominator", m.n_builds}}},
               {"mean_latency_ms", m.mean_latency ? json(m.mean_latency->count()) : json(nullptr)},
               {"max_latency_ms", m.max_latency ? json(m.max_latency->count()) : json(nullptr)},
               {"max_queue_depth", m.max_queue_depth}};
  json builds = json::array();
  for (const auto& b : r.builds) {
    builds.push_back({{"cause", b.cause},
                      {"start_ms", to_ms(b.start)},
                      {"end_ms", to_ms(b.end)},
                      {"changes", b.change_seqs},
                      {"target_seq", b.target_seq}});
  }
  json depth = json::array();
  for (const auto& s : r.queue_depth) depth.push_back({to_ms(s.at), s.depth});
  return {{"metrics", metrics}, {"builds", builds}, {"queue_depth", depth}};
}

httplib::Client client_for(const std::string& server) {
  const auto ep = parse_endpoint(server);
  httplib::Client client(ep.host, ep.port);
  client.set_connection_timeout(5);
  client.set_read_timeout(30);
  return client;
}

json expect_json(const httplib::Result& res, const std::string& server, int expected_status) {
  if (!res) {
    throw OperationFailed("cannot reach server " + server + ": " + httplib::to_string(res.error()));
  }
  json body;
  try {
    body = json::parse(res->body);
  } catch (const json::exception&) {
    throw OperationFailed("server answered " + std::to_string(res->status) + " with a non-JSON body");
  }
  if (res->status != expected_status) {
    throw OperationFailed("server answered " + std::to_string(res->status) + ": " +
                          body.value("error", res->body));
  }
  return body;
}

int cmd_serve(const std::string& config_path, const std::string& listen, std::ostream& out) {
  auto config = load_config(config_path);
  if (!listen.empty()) config.listen = listen;

  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  // Threads started below inherit the mask, so only sigwait sees them.
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

  CiServer server(config);
  HttpService http(server);
  auto ep = parse_endpoint(config.listen);
  ep.port = http.bind(ep);
  server.start();
  http.start();
  out << "listening on " << ep.host << ':' << ep.port << std::endl;

  int sig = 0;
  sigwait(&stop_signals, &sig);
  http.stop();
  server.stop();
  out << "stopped" << std::endl;
  return kExitOk;
}

int cmd_build_local(const std::string& project, const std::string& config_path,
                    const std::string& actor, std::ostream& out) {
  const auto config = load_config(config_path);
  const auto it = std::find_if(config.projects.begin(), config.projects.end(),
                               [&](const ProjectConfig& p) { return p.id == project; });
  if (it == config.projects.end()) throw OperationFailed("unknown project " + project);

  SystemClock clock;
  HistoryStore history(config.history);
  auto state = make_project(it->id, it->policy, definition_of(*it), open_repository(it->repo),
                            clock.now());
  // Continue from the newest recorded integration of this project.
  HistoryFilter filter;
  filter.project = project;
  const auto past = history.query(filter);
  for (auto r = past.rbegin(); r != past.rend(); ++r) {
    if (std::holds_alternative<Errored>(r->outcome)) continue;
    try {
      changes_since(state.repo, r->request.target_revision);
      state.claimed = state.last_integrated = r->request.target_revision;
    } catch (const Error&) {
    }
    break;
  }

  auto submitted = submit_command(std::move(state), actor, clock.now());
  const fs::path workspace = config.workspace_root / project;
  fs::create_directories(workspace);
  auto run = run_pipeline(submitted.state.definition, submitted.request, workspace, clock);
  run.run_id = history.last_run_id() + 1;
  history.append(run);
  print_run_line(out, run);
  return std::holds_alternative<Success>(run.outcome) ? kExitOk : kExitFailure;
}

int cmd_build_remote(const std::string& project, const std::string& server,
                     const std::string& actor, std::ostream& out) {
  auto client = client_for(server);
  const auto res = client.Post("/projects/" + project + "/build", json{{"actor", actor}}.dump(),
                               "application/json");
  const auto body = expect_json(res, server, 202);
  out << "project=" << body.at("project").get<std::string>() << '\n'
      << "receipt=" << body.at("receipt").get<std::uint64_t>() << '\n'
      << "actor=" << body.at("actor").get<std::string>() << '\n';
  return kExitOk;
}

int cmd_classify(const std::string& policy_text, std::ostream& out, std::ostream& err) {
  TriggerPolicy policy;
  try {
    policy = codec::parse_policy(policy_text);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  if (auto v = validate_policy(policy); !v.empty()) {
    for (const auto& msg : v) err << "invalid policy: " << msg << '\n';
    return kExitFailure;
  }
  out << to_string(classify(policy)) << '\n';
  return kExitOk;
}

int cmd_status(const std::string& project, const std::string& server, std::ostream& out) {
  auto client = client_for(server);
  const auto body = expect_json(client.Get("/projects/" + project + "/status"), server, 200);
  const auto& c = body.at("classification");
  out << "project=" << body.at("project").get<std::string>() << '\n'
      << "classification=" << c.at("mode").get<std::string>() << '/'
      << c.at("maturity").get<std::string>() << '/' << c.at("trigger_kind").get<std::string>()
      << '\n'
      << "queue_depth=" << body.at("queue_depth").get<std::size_t>() << '\n'
      << "running=" << (body.at("running").get<bool>() ? "true" : "false") << '\n';
  const auto& last = body.at("last_run");
  if (last.is_null()) {
    out << "last_run=none\n";
  } else {
    out << "last_run=" << last.at("run_id").get<std::uint64_t>() << ' '
        << last.at("outcome").at("kind").get<std::string>() << '\n';
  }
  return kExitOk;
}

int cmd_history(const std::string& project, const std::optional<std::string>& outcome,
                const std::string& server, const std::string& config_path,
                const std::string& history_path, std::ostream& out) {
  std::vector<BuildRun> runs;
  if (!server.empty()) {
    auto client = client_for(server);
    std::string target = "/projects/" + project + "/runs";
    if (outcome) target += "?outcome=" + *outcome;
    const auto body = expect_json(client.Get(target), server, 200);
    for (const auto& r : body.at("runs")) runs.push_back(codec::run_from_json(r));
  } else {
    const fs::path path = !history_path.empty() ? fs::path(history_path) : load_config(config_path).history;
    HistoryFilter filter;
    filter.project = project;
    filter.outcome = outcome;
    for (auto& r : read_history(path)) {
      if (filter.matches(r)) runs.push_back(std::move(r));
    }
  }
  for (const auto& r : runs) print_run_line(out, r);
  return kExitOk;
}

int cmd_simulate(const std::string& trace_path, const std::string& policy_text,
                 std::int64_t duration_ms, std::optional<std::int64_t> horizon_ms, bool as_json,
                 const std::string& report_path, bool oracle, std::ostream& out) {
  std::ifstream in(trace_path);
  if (!in) throw OperationFailed("cannot read trace " + trace_path);
  const auto trace = read_trace(in);
  const auto policy = codec::parse_policy(policy_text);

  SimOptions options;
  options.build_duration = Duration{duration_ms};
  if (horizon_ms) options.horizon = from_ms(*horizon_ms);
  const auto report =
      oracle ? brute_force_replay(trace, policy, options) : simulate(trace, policy, options);

  if (!report_path.empty()) {
    std::ofstream f(report_path);
    f << report_to_json(report).dump(2) << '\n';
    if (!f) throw OperationFailed("cannot write report " + report_path);
  }
  if (as_json) {
    out << report_to_json(report).dump(2) << '\n';
  } else {
    print_metrics(out, report.metrics);
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"buildherd: a small continuous integration server"};
  app.require_subcommand(1);

  std::string config_path;
  std::string listen;
  auto* serve = app.add_subcommand("serve", "Run the CI server");
  serve->add_option("--config", config_path, "Service config file")->required();
  serve->add_option("--listen", listen, "Override the listen address (host:port)");

  std::string project;
  std::string server = "127.0.0.1:8080";
  std::string actor = default_actor();
  auto* build = app.add_subcommand("build", "Command a build (the lever)");
  build->add_option("project", project, "Project id")->required();
  auto* build_server = build->add_option("--server", server, "Server address");
  auto* build_config = build->add_option("--config", config_path, "Build in-process using this config");
  build_config->excludes(build_server);
  build->add_option("--actor", actor, "Who pulls the lever");

  std::string policy_text;
  auto* classify_cmd = app.add_subcommand("classify", "Print the taxonomy label of a policy");
  classify_cmd->add_option("--policy", policy_text, "Policy JSON")->required();

  auto* status = app.add_subcommand("status", "Show a project's state on a running server");
  status->add_option("project", project, "Project id")->required();
  status->add_option("--server", server, "Server address");

  std::optional<std::string> outcome;
  std::string history_path;
  std::string history_server;
  auto* history = app.add_subcommand("history", "List recorded runs of a project");
  history->add_option("project", project, "Project id")->required();
  history->add_option("--outcome", outcome, "success | failed | errored")
      ->check(CLI::IsMember({"success", "failed", "errored"}));
  auto* h_server = history->add_option("--server", history_server, "Ask a running server");
  auto* h_config = history->add_option("--config", config_path, "Read the config's history file");
  auto* h_file = history->add_option("--history", history_path, "Read this history file");
  h_server->excludes(h_config)->excludes(h_file);
  h_config->excludes(h_file);

  std::string trace_path;
  std::int64_t duration_ms = 0;
  std::optional<std::int64_t> horizon_ms;
  bool as_json = false;
  bool oracle = false;
  std::string report_path;
  auto* simulate_cmd = app.add_subcommand("simulate", "Replay a commit trace under a policy");
  simulate_cmd->add_option("--trace", trace_path, "Trace file (JSON lines)")->required();
  simulate_cmd->add_option("--policy", policy_text, "Policy JSON")->required();
  simulate_cmd->add_option("--duration", duration_ms, "Build duration in ms")->required();
  simulate_cmd->add_option("--horizon", horizon_ms, "Stop triggering after this instant (ms)");
  simulate_cmd->add_flag("--json", as_json, "Print the full report as JSON");
  simulate_cmd->add_option("--report", report_path, "Also write the JSON report to a file");
  simulate_cmd->add_flag("--oracle", oracle, "Use the millisecond-stepping reference simulator");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*serve) return cmd_serve(config_path, listen, out);
    if (*build) {
      if (!config_path.empty()) return cmd_build_local(project, config_path, actor, out);
      return cmd_build_remote(project, server, actor, out);
    }
    if (*classify_cmd) return cmd_classify(policy_text, out, err);
    if (*status) return cmd_status(project, server, out);
    if (*history) {
      if (history_server.empty() && config_path.empty() && history_path.empty()) {
        err << "history needs one of --server, --config, --history\n";
        return kExitUsage;
      }
      return cmd_history(project, outcome, history_server, config_path, history_path, out);
    }
    if (*simulate_cmd) {
      return cmd_simulate(trace_path, policy_text, duration_ms, horizon_ms, as_json, report_path,
                          oracle, out);
    }
  } catch (const OperationFailed& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    const bool usage = e.code() == ErrorCode::kParse;
    return usage ? kExitUsage : kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace buildherd
