#pragma once

// JSON encodings shared by the history file, the config file, the HTTP
// surface and the CLI. Durations and instants are integer milliseconds.

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "buildherd/model.hpp"
#include "buildherd/pipeline.hpp"
#include "buildherd/triggers.hpp"

namespace buildherd::codec {

using nlohmann::json;

json to_json(const Revision& r);
Revision revision_from_json(const json& j);

json to_json(const Change& c);
Change change_from_json(const json& j);

// {"levered":{}} | {"scheduled":{"daily":["02:00"],"every_ms":..,"utc_offset_min":..}}
// | {"triggered":{"polled":{"interval_ms":..}|"hooked":{},"quiet_ms":..}}
json to_json(const TriggerPolicy& p);
TriggerPolicy policy_from_json(const json& j);
TriggerPolicy parse_policy(std::string_view text);

json to_json(const ClassificationLabel& l);

json to_json(const BuildCause& c);
BuildCause cause_from_json(const json& j);

json to_json(const Outcome& o);
Outcome outcome_from_json(const json& j);

json to_json(const StepResult& r);
StepResult step_result_from_json(const json& j);

// One history record.
json to_json(const BuildRun& run);
BuildRun run_from_json(const json& j);

json to_json(const BuildStep& s);
BuildStep step_from_json(const json& j);
json steps_to_json(const std::vector<BuildStep>& steps);
std::vector<BuildStep> steps_from_json(const json& j);

// Hook body: {"repo":..,"nonce":..,"revision":{"id":..,"seq":..}?}
HookNotification hook_from_json(const json& j, Instant received_at);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

// "HH:MM"
TimeOfDay parse_time_of_day(std::string_view text);
std::string format_time_of_day(TimeOfDay t);

// All parse failures, including nlohmann type errors, surface as
// Error(kParse).
json parse(std::string_view text);

}  // namespace buildherd::codec
