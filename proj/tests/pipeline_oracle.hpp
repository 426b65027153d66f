// Step helpers and a reference interpreter for build definitions, shared by
// the pipeline tests and the acceptance suite.
#pragma once

#include <random>
#include <string>
#include <vector>

#include "buildherd/pipeline.hpp"

namespace buildherd::testgen {

inline BuildStep stub(std::string name, bool ok, OnSuccess s = Continue{}, OnFailure f = Halt{},
                      std::int64_t ms = 0) {
  StubCommand c;
  c.succeed = ok;
  c.duration = Duration{ms};
  return BuildStep{std::move(name), c, std::move(s), std::move(f)};
}

inline std::vector<std::string> names(const BuildRun& run) {
  std::vector<std::string> out;
  for (const auto& r : run.step_results) out.push_back(r.step_name);
  return out;
}

// Walks the definition by name without plan_next: the reference reading of
// the continuation rules.
inline std::vector<std::string> naive_walk(const BuildDefinition& def) {
  std::vector<std::string> trace;
  std::string current = def.steps.front().name;
  for (;;) {
    const BuildStep* step = nullptr;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < def.steps.size(); ++i) {
      if (def.steps[i].name == current) {
        step = &def.steps[i];
        pos = i;
      }
    }
    trace.push_back(current);
    const bool ok = std::get<StubCommand>(step->command).succeed;
    const bool has_next = pos + 1 < def.steps.size();
    std::string next;
    if (ok) {
      if (std::holds_alternative<StopSuccess>(step->on_success)) return trace;
      if (const auto* g = std::get_if<Goto>(&step->on_success)) next = g->step;
      else if (has_next) next = def.steps[pos + 1].name;
      else return trace;
    } else {
      if (std::holds_alternative<Halt>(step->on_failure)) return trace;
      if (const auto* g = std::get_if<Goto>(&step->on_failure)) next = g->step;
      else if (has_next) next = def.steps[pos + 1].name;
      else return trace;
    }
    current = next;
  }
}

inline BuildDefinition random_definition(std::mt19937& rng) {
  std::uniform_int_distribution<std::size_t> len(1, 8);
  std::uniform_int_distribution<int> pick(0, 2);
  std::bernoulli_distribution ok(0.6);
  BuildDefinition def{"p", {}};
  const auto n = len(rng);
  for (std::size_t i = 0; i < n; ++i) {
    const bool forward_possible = i + 1 < n;
    auto target = [&] {
      std::uniform_int_distribution<std::size_t> t(i + 1, n - 1);
      return "s" + std::to_string(t(rng));
    };
    OnSuccess s = Continue{};
    OnFailure f = Halt{};
    switch (pick(rng)) {
      case 0: s = Continue{}; break;
      case 1: s = StopSuccess{}; break;
      default: s = forward_possible ? OnSuccess{Goto{target()}} : OnSuccess{Continue{}};
    }
    switch (pick(rng)) {
      case 0: f = Halt{}; break;
      case 1: f = ContinueAnyway{}; break;
      default: f = forward_possible ? OnFailure{Goto{target()}} : OnFailure{Halt{}};
    }
    def.steps.push_back(stub("s" + std::to_string(i), ok(rng), s, f));
  }
  return def;
}

}  // namespace buildherd::testgen
