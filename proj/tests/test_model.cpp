#include <random>

#include "doctest.h"

#include "buildherd/error.hpp"
#include "buildherd/model.hpp"

using namespace buildherd;

namespace {

Change change_at(std::uint64_t seq, std::int64_t t) {
  return Change{Revision{"r" + std::to_string(seq), seq}, "dev", from_ms(t), {"a.c"}};
}

BuildRun run_ending(std::int64_t end, std::vector<Change> changes) {
  BuildRun r;
  r.run_id = 1;
  r.request.changes = std::move(changes);
  r.ended_at = from_ms(end);
  return r;
}

Triggered hooked(std::int64_t quiet_ms) { return Triggered{Hooked{}, Duration{quiet_ms}}; }
Triggered polled(std::int64_t interval_ms, std::int64_t quiet_ms) {
  return Triggered{Polled{Duration{interval_ms}}, Duration{quiet_ms}};
}

}  // namespace

TEST_CASE("classify maps each policy onto its taxonomy leaf") {
  CHECK(classify(Levered{}) ==
        ClassificationLabel{Mode::kOnDemand, Maturity::kNone, TriggerKind::kNone});

  Schedule nightly;
  nightly.daily_times = {std::chrono::hours{2}};
  CHECK(classify(Scheduled{nightly}) ==
        ClassificationLabel{Mode::kContinual, Maturity::kTransitional, TriggerKind::kScheduled});

  CHECK(classify(hooked(120'000)) ==
        ClassificationLabel{Mode::kContinual, Maturity::kTransitional, TriggerKind::kHooked});
  CHECK(classify(polled(60'000, 0)) ==
        ClassificationLabel{Mode::kContinual, Maturity::kStrict, TriggerKind::kPolled});
  CHECK(classify(hooked(0)) ==
        ClassificationLabel{Mode::kContinual, Maturity::kStrict, TriggerKind::kHooked});
  CHECK(classify(polled(60'000, 1)) ==
        ClassificationLabel{Mode::kContinual, Maturity::kTransitional, TriggerKind::kPolled});
}

TEST_CASE("label text") {
  CHECK(to_string(classify(hooked(0))) == "Continual/Strict/Hooked");
  CHECK(to_string(classify(Levered{})) == "OnDemand/None/None");
}

TEST_CASE("strict maturity exactly when triggered without quiet period") {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> kind(0, 3);
  std::uniform_int_distribution<std::int64_t> ms(0, 5000);
  for (int i = 0; i < 500; ++i) {
    TriggerPolicy p;
    bool expect_strict = false;
    switch (kind(rng)) {
      case 0: p = Levered{}; break;
      case 1: {
        Schedule s;
        s.every = Duration{ms(rng) + 1};
        p = Scheduled{s};
        break;
      }
      case 2: {
        const auto q = ms(rng) % 3 == 0 ? 0 : ms(rng);
        p = polled(ms(rng) + 1, q);
        expect_strict = q == 0;
        break;
      }
      default: {
        const auto q = ms(rng) % 3 == 0 ? 0 : ms(rng);
        p = hooked(q);
        expect_strict = q == 0;
      }
    }
    const auto label = classify(p);
    CHECK((label.maturity == Maturity::kStrict) == expect_strict);
    if (label.mode == Mode::kOnDemand) {
      CHECK(label.maturity == Maturity::kNone);
      CHECK(label.trigger_kind == TriggerKind::kNone);
    }
    if (label.maturity == Maturity::kStrict) {
      CHECK((label.trigger_kind == TriggerKind::kPolled || label.trigger_kind == TriggerKind::kHooked));
    }
  }
}

TEST_CASE("feedback_latency") {
  const auto c0 = change_at(1, 0);
  const auto c1 = change_at(2, 1);
  CHECK(feedback_latency(run_ending(5, {c0}), c0) == Duration{5});
  CHECK(feedback_latency(run_ending(13, {c0, c1}), c1) == Duration{12});

  try {
    feedback_latency(run_ending(13, {c0}), c1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kChangeNotInRun);
  }
}

TEST_CASE("validate_policy") {
  CHECK(validate_policy(polled(60'000, 0)).empty());
  CHECK(validate_policy(Levered{}).empty());

  const auto zero = validate_policy(polled(0, 0));
  REQUIRE(zero.size() == 1);
  CHECK(zero[0] == "interval must be positive");

  const auto empty = validate_policy(Scheduled{Schedule{}});
  REQUIRE(empty.size() == 1);
  CHECK(empty[0] == "empty schedule");

  CHECK_FALSE(validate_policy(hooked(-1)).empty());

  Schedule unsorted;
  unsorted.daily_times = {std::chrono::hours{3}, std::chrono::hours{2}};
  CHECK_FALSE(validate_policy(Scheduled{unsorted}).empty());

  Schedule dup;
  dup.daily_times = {std::chrono::hours{2}, std::chrono::hours{2}};
  CHECK_FALSE(validate_policy(Scheduled{dup}).empty());
}
