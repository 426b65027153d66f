#include "buildherd/model.hpp"

#include <algorithm>

#include "buildherd/detail/overloaded.hpp"
#include "buildherd/error.hpp"

namespace buildherd {

namespace {

using detail::overloaded;

TriggerKind detection_kind(const Detection& d) {
  return std::holds_alternative<Polled>(d) ? TriggerKind::kPolled : TriggerKind::kHooked;
}

}  // namespace

std::string to_string(Mode m) { return m == Mode::kOnDemand ? "OnDemand" : "Continual"; }

std::string to_string(Maturity m) {
  switch (m) {
    case Maturity::kNone: return "None";
    case Maturity::kTransitional: return "Transitional";
    case Maturity::kStrict: return "Strict";
  }
  return "None";
}

std::string to_string(TriggerKind k) {
  switch (k) {
    case TriggerKind::kNone: return "None";
    case TriggerKind::kScheduled: return "Scheduled";
    case TriggerKind::kPolled: return "Polled";
    case TriggerKind::kHooked: return "Hooked";
  }
  return "None";
}

std::string to_string(const ClassificationLabel& label) {
  return to_string(label.mode) + "/" + to_string(label.maturity) + "/" +
         to_string(label.trigger_kind);
}

std::string cause_kind(const BuildCause& cause) {
  return std::visit(overloaded{
                        [](const Commanded&) { return std::string("commanded"); },
                        [](const ScheduleFire&) { return std::string("schedule_fire"); },
                        [](const PollDetected&) { return std::string("poll_detected"); },
                        [](const HookNotified&) { return std::string("hook_notified"); },
                    },
                    cause);
}

std::string outcome_kind(const Outcome& outcome) {
  return std::visit(overloaded{
                        [](const Success&) { return std::string("success"); },
                        [](const FailedAt&) { return std::string("failed"); },
                        [](const Errored&) { return std::string("errored"); },
                    },
                    outcome);
}

ClassificationLabel classify(const TriggerPolicy& policy) {
  return std::visit(
      overloaded{
          [](const Levered&) {
            return ClassificationLabel{Mode::kOnDemand, Maturity::kNone, TriggerKind::kNone};
          },
          [](const Scheduled&) {
            return ClassificationLabel{Mode::kContinual, Maturity::kTransitional,
                                       TriggerKind::kScheduled};
          },
          [](const Triggered& t) {
            // A quiet period means builds no longer follow every change.
            const auto maturity =
                t.quiet_period == Duration::zero() ? Maturity::kStrict : Maturity::kTransitional;
            return ClassificationLabel{Mode::kContinual, maturity, detection_kind(t.detection)};
          },
      },
      policy);
}

Duration feedback_latency(const BuildRun& run, const Change& change) {
  const auto& changes = run.request.changes;
  const bool found = std::any_of(changes.begin(), changes.end(), [&](const Change& c) {
    return c.revision == change.revision;
  });
  if (!found) {
    throw Error(ErrorCode::kChangeNotInRun,
                "change " + std::to_string(change.revision.seq) + " is not part of run " +
                    std::to_string(run.run_id));
  }
  return run.ended_at - change.timestamp;
}

std::vector<std::string> validate_policy(const TriggerPolicy& policy) {
  std::vector<std::string> violations;
  std::visit(overloaded{
                 [](const Levered&) {},
                 [&](const Scheduled& s) {
                   const auto& sch = s.schedule;
                   if (sch.daily_times.empty() && !sch.every) {
                     violations.emplace_back("empty schedule");
                   }
                   if (sch.every && *sch.every <= Duration::zero()) {
                     violations.emplace_back("every must be positive");
                   }
                   for (std::size_t i = 0; i < sch.daily_times.size(); ++i) {
                     const auto t = sch.daily_times[i];
                     if (t < TimeOfDay{0} || t >= std::chrono::hours{24}) {
                       violations.emplace_back("daily time out of range");
                     }
                     if (i > 0 && sch.daily_times[i - 1] >= t) {
                       violations.emplace_back("daily times must be sorted and unique");
                     }
                   }
                 },
                 [&](const Triggered& t) {
                   if (const auto* p = std::get_if<Polled>(&t.detection);
                       p && p->interval <= Duration::zero()) {
                     violations.emplace_back("interval must be positive");
                   }
                   if (t.quiet_period < Duration::zero()) {
                     violations.emplace_back("quiet period must be non-negative");
                   }
                 },
             },
             policy);
  return violations;
}

}  // namespace buildherd
