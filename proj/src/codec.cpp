#include "buildherd/codec.hpp"

#include <openssl/evp.h>

#include <charconv>

#include "buildherd/detail/overloaded.hpp"
#include "buildherd/error.hpp"

namespace buildherd::codec {

using detail::overloaded;

namespace {

template <class F>
auto guarded(std::string_view what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, "malformed " + std::string(what) + ": " + e.what());
  }
}

[[noreturn]] void bad(std::string_view what, const std::string& detail) {
  throw Error(ErrorCode::kParse, "malformed " + std::string(what) + ": " + detail);
}

std::int64_t ms_of(const json& j, const char* key) { return j.at(key).get<std::int64_t>(); }

}  // namespace

json parse(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("invalid JSON: ") + e.what());
  }
}

json to_json(const Revision& r) { return {{"id", r.id}, {"seq", r.seq}}; }

Revision revision_from_json(const json& j) {
  return guarded("revision", [&] {
    return Revision{j.at("id").get<std::string>(), j.at("seq").get<std::uint64_t>()};
  });
}

json to_json(const Change& c) {
  return {{"seq", c.revision.seq},
          {"id", c.revision.id},
          {"timestamp", to_ms(c.timestamp)},
          {"author", c.author},
          {"paths", c.changed_paths}};
}

Change change_from_json(const json& j) {
  return guarded("change", [&] {
    Change c;
    c.revision = Revision{j.at("id").get<std::string>(), j.at("seq").get<std::uint64_t>()};
    c.timestamp = from_ms(ms_of(j, "timestamp"));
    c.author = j.at("author").get<std::string>();
    c.changed_paths = j.at("paths").get<std::vector<std::string>>();
    return c;
  });
}

TimeOfDay parse_time_of_day(std::string_view text) {
  int h = -1;
  int m = -1;
  if (text.size() == 5 && text[2] == ':') {
    const auto hr = std::from_chars(text.data(), text.data() + 2, h);
    const auto mr = std::from_chars(text.data() + 3, text.data() + 5, m);
    if (hr.ptr != text.data() + 2 || mr.ptr != text.data() + 5) h = -1;
  }
  if (h < 0 || h > 23 || m < 0 || m > 59) bad("time of day", "'" + std::string(text) + "'");
  return std::chrono::hours{h} + std::chrono::minutes{m};
}

std::string format_time_of_day(TimeOfDay t) {
  const auto total = t.count();
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02d:%02d", static_cast<int>(total / 60),
                static_cast<int>(total % 60));
  return buf;
}

json to_json(const TriggerPolicy& p) {
  return std::visit(
      overloaded{
          [](const Levered&) { return json{{"levered", json::object()}}; },
          [](const Scheduled& s) {
            json body = json::object();
            json daily = json::array();
            for (auto t : s.schedule.daily_times) daily.push_back(format_time_of_day(t));
            body["daily"] = daily;
            if (s.schedule.every) body["every_ms"] = to_ms(*s.schedule.every);
            if (s.schedule.utc_offset.count() != 0) body["utc_offset_min"] = s.schedule.utc_offset.count();
            return json{{"scheduled", body}};
          },
          [](const Triggered& t) {
            json body = json::object();
            if (const auto* p = std::get_if<Polled>(&t.detection)) {
              body["polled"] = {{"interval_ms", to_ms(p->interval)}};
            } else {
              body["hooked"] = json::object();
            }
            body["quiet_ms"] = to_ms(t.quiet_period);
            return json{{"triggered", body}};
          },
      },
      p);
}

TriggerPolicy policy_from_json(const json& j) {
  return guarded("policy", [&]() -> TriggerPolicy {
    if (j.is_string() && j.get<std::string>() == "levered") return Levered{};
    if (!j.is_object() || j.size() != 1) {
      bad("policy", "expected exactly one of levered, scheduled, triggered");
    }
    if (j.contains("levered")) return Levered{};
    if (j.contains("scheduled")) {
      const auto& b = j.at("scheduled");
      Schedule s;
      if (b.contains("daily")) {
        for (const auto& t : b.at("daily")) s.daily_times.push_back(parse_time_of_day(t.get<std::string>()));
      }
      if (b.contains("every_ms")) s.every = Duration{ms_of(b, "every_ms")};
      if (b.contains("utc_offset_min")) s.utc_offset = std::chrono::minutes{b.at("utc_offset_min").get<int>()};
      return Scheduled{std::move(s)};
    }
    if (j.contains("triggered")) {
      const auto& b = j.at("triggered");
      Triggered t;
      const bool polled = b.contains("polled");
      const bool hooked = b.contains("hooked");
      if (polled == hooked) bad("policy", "triggered needs exactly one of polled, hooked");
      if (polled) {
        t.detection = Polled{Duration{ms_of(b.at("polled"), "interval_ms")}};
      } else {
        t.detection = Hooked{};
      }
      t.quiet_period = Duration{b.value("quiet_ms", std::int64_t{0})};
      return t;
    }
    bad("policy", "unknown variant " + j.begin().key());
  });
}

TriggerPolicy parse_policy(std::string_view text) { return policy_from_json(parse(text)); }

json to_json(const ClassificationLabel& l) {
  return {{"mode", to_string(l.mode)},
          {"maturity", to_string(l.maturity)},
          {"trigger_kind", to_string(l.trigger_kind)}};
}

json to_json(const BuildCause& c) {
  return std::visit(overloaded{
                        [](const Commanded& x) { return json{{"kind", "commanded"}, {"actor", x.actor}}; },
                        [](const ScheduleFire& x) {
                          return json{{"kind", "schedule_fire"}, {"fire_time", to_ms(x.fire_time)}};
                        },
                        [](const PollDetected& x) {
                          return json{{"kind", "poll_detected"}, {"poll_time", to_ms(x.poll_time)}};
                        },
                        [](const HookNotified& x) {
                          return json{{"kind", "hook_notified"}, {"received_time", to_ms(x.received_time)}};
                        },
                    },
                    c);
}

BuildCause cause_from_json(const json& j) {
  return guarded("cause", [&]() -> BuildCause {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "commanded") return Commanded{j.at("actor").get<std::string>()};
    if (kind == "schedule_fire") return ScheduleFire{from_ms(ms_of(j, "fire_time"))};
    if (kind == "poll_detected") return PollDetected{from_ms(ms_of(j, "poll_time"))};
    if (kind == "hook_notified") return HookNotified{from_ms(ms_of(j, "received_time"))};
    bad("cause", "unknown kind " + kind);
  });
}

json to_json(const Outcome& o) {
  return std::visit(overloaded{
                        [](const Success&) { return json{{"kind", "success"}}; },
                        [](const FailedAt& f) { return json{{"kind", "failed"}, {"step", f.step_name}}; },
                        [](const Errored& e) { return json{{"kind", "errored"}, {"reason", e.reason}}; },
                    },
                    o);
}

Outcome outcome_from_json(const json& j) {
  return guarded("outcome", [&]() -> Outcome {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "success") return Success{};
    if (kind == "failed") return FailedAt{j.at("step").get<std::string>()};
    if (kind == "errored") return Errored{j.at("reason").get<std::string>()};
    bad("outcome", "unknown kind " + kind);
  });
}

json to_json(const StepResult& r) {
  json j{{"name", r.step_name},
         {"status", is_failure(r.status) ? "failed" : "succeeded"},
         {"duration_ms", to_ms(r.duration)},
         {"output_b64", base64_encode(r.captured_output)},
         {"truncated", r.output_truncated}};
  if (const auto* f = std::get_if<Failed>(&r.status)) j["exit_code"] = f->exit_code;
  return j;
}

StepResult step_result_from_json(const json& j) {
  return guarded("step result", [&] {
    StepResult r;
    r.step_name = j.at("name").get<std::string>();
    const auto status = j.at("status").get<std::string>();
    if (status == "succeeded") {
      r.status = Succeeded{};
    } else if (status == "failed") {
      r.status = Failed{j.at("exit_code").get<int>()};
    } else {
      bad("step result", "unknown status " + status);
    }
    r.duration = Duration{ms_of(j, "duration_ms")};
    r.captured_output = base64_decode(j.at("output_b64").get<std::string>());
    r.output_truncated = j.at("truncated").get<bool>();
    return r;
  });
}

json to_json(const BuildRun& run) {
  json changes = json::array();
  for (const auto& c : run.request.changes) changes.push_back(to_json(c));
  json steps = json::array();
  for (const auto& s : run.step_results) steps.push_back(to_json(s));
  return {{"run_id", run.run_id},
          {"project", run.project},
          {"cause", to_json(run.request.cause)},
          {"target", to_json(run.request.target_revision)},
          {"created_at", to_ms(run.request.created_at)},
          {"changes", changes},
          {"started_at", to_ms(run.started_at)},
          {"ended_at", to_ms(run.ended_at)},
          {"outcome", to_json(run.outcome)},
          {"steps", steps}};
}

BuildRun run_from_json(const json& j) {
  return guarded("run", [&] {
    BuildRun run;
    run.run_id = j.at("run_id").get<std::uint64_t>();
    run.project = j.at("project").get<std::string>();
    run.request.cause = cause_from_json(j.at("cause"));
    run.request.target_revision = revision_from_json(j.at("target"));
    run.request.created_at = from_ms(ms_of(j, "created_at"));
    for (const auto& c : j.at("changes")) run.request.changes.push_back(change_from_json(c));
    run.started_at = from_ms(ms_of(j, "started_at"));
    run.ended_at = from_ms(ms_of(j, "ended_at"));
    run.outcome = outcome_from_json(j.at("outcome"));
    for (const auto& s : j.at("steps")) run.step_results.push_back(step_result_from_json(s));
    return run;
  });
}

namespace {

json continuation_to_json(const OnSuccess& c) {
  return std::visit(overloaded{
                        [](const Continue&) { return json("continue"); },
                        [](const StopSuccess&) { return json("stop_success"); },
                        [](const Goto& g) { return json{{"goto", g.step}}; },
                    },
                    c);
}

json continuation_to_json(const OnFailure& c) {
  return std::visit(overloaded{
                        [](const Halt&) { return json("halt"); },
                        [](const ContinueAnyway&) { return json("continue_anyway"); },
                        [](const Goto& g) { return json{{"goto", g.step}}; },
                    },
                    c);
}

OnSuccess on_success_from_json(const json& j) {
  if (j.is_object()) return Goto{j.at("goto").get<std::string>()};
  const auto s = j.get<std::string>();
  if (s == "continue") return Continue{};
  if (s == "stop_success") return StopSuccess{};
  bad("step", "unknown on_success '" + s + "'");
}

OnFailure on_failure_from_json(const json& j) {
  if (j.is_object()) return Goto{j.at("goto").get<std::string>()};
  const auto s = j.get<std::string>();
  if (s == "halt") return Halt{};
  if (s == "continue_anyway") return ContinueAnyway{};
  bad("step", "unknown on_failure '" + s + "'");
}

}  // namespace

json to_json(const BuildStep& s) {
  json j{{"name", s.name}};
  std::visit(overloaded{
                 [&](const ExecCommand& c) { j["run"] = c.argv; },
                 [&](const StubCommand& c) {
                   j["builtin"] = c.succeed ? (c.duration.count() > 0 ? "sleep" : "succeed") : "fail";
                   if (c.duration.count() > 0) j["ms"] = to_ms(c.duration);
                   if (!c.succeed) j["exit_code"] = c.exit_code;
                   if (!c.output.empty()) j["output"] = c.output;
                 },
             },
             s.command);
  j["on_success"] = continuation_to_json(s.on_success);
  j["on_failure"] = continuation_to_json(s.on_failure);
  return j;
}

BuildStep step_from_json(const json& j) {
  return guarded("step", [&] {
    BuildStep s;
    s.name = j.at("name").get<std::string>();
    const bool has_run = j.contains("run");
    const bool has_builtin = j.contains("builtin");
    if (has_run == has_builtin) bad("step", "'" + s.name + "' needs exactly one of run, builtin");
    if (has_run) {
      s.command = ExecCommand{j.at("run").get<std::vector<std::string>>()};
    } else {
      StubCommand stub;
      const auto kind = j.at("builtin").get<std::string>();
      if (kind == "fail") {
        stub.succeed = false;
      } else if (kind != "succeed" && kind != "sleep") {
        bad("step", "unknown builtin '" + kind + "'");
      }
      stub.duration = Duration{j.value("ms", std::int64_t{0})};
      stub.exit_code = j.value("exit_code", 1);
      stub.output = j.value("output", std::string{});
      s.command = stub;
    }
    if (j.contains("on_success")) s.on_success = on_success_from_json(j.at("on_success"));
    if (j.contains("on_failure")) s.on_failure = on_failure_from_json(j.at("on_failure"));
    return s;
  });
}

json steps_to_json(const std::vector<BuildStep>& steps) {
  json arr = json::array();
  for (const auto& s : steps) arr.push_back(to_json(s));
  return arr;
}

std::vector<BuildStep> steps_from_json(const json& j) {
  return guarded("steps", [&] {
    std::vector<BuildStep> steps;
    for (const auto& s : j) steps.push_back(step_from_json(s));
    return steps;
  });
}

HookNotification hook_from_json(const json& j, Instant received_at) {
  return guarded("hook body", [&] {
    if (!j.is_object()) bad("hook body", "expected an object");
    HookNotification n;
    n.repo_id = j.at("repo").get<std::string>();
    n.nonce = j.at("nonce").get<std::string>();
    if (n.nonce.empty()) bad("hook body", "empty nonce");
    n.received_at = received_at;
    if (j.contains("revision") && !j.at("revision").is_null()) {
      n.claimed_revision = revision_from_json(j.at("revision"));
    }
    return n;
  });
}

std::string base64_encode(std::string_view bytes) {
  if (bytes.empty()) return {};
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string base64_decode(std::string_view text) {
  if (text.empty()) return {};
  if (text.size() % 4 != 0) bad("base64", "length is not a multiple of 4");
  std::string out(3 * text.size() / 4, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) bad("base64", "invalid characters");
  std::size_t padding = 0;
  if (text.back() == '=') ++padding;
  if (text.size() >= 2 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

}  // namespace buildherd::codec
