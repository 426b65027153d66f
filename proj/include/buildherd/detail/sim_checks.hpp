#pragma once

#include "buildherd/sim.hpp"

namespace buildherd::detail {

void check_sim_inputs(const CommitTrace& trace, const TriggerPolicy& policy,
                      const SimOptions& options);

}  // namespace buildherd::detail
