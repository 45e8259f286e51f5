#pragma once

#include <vector>

#include "kairanban/backend.hpp"
#include "kairanban/core.hpp"

// Scripted replies that drive the pipelines without a language model.
namespace kairanban::fixtures {

/// Step distributions for steps 1..N that sharpen monotonically towards the
/// last label: entropy strictly decreases, variance strictly increases.
std::vector<std::vector<double>> converging_distributions(int n_agents, const LabelSpace& space);

/// Replies keyed by (phase, agent) for every call of a kcs, kcs_ibc or single
/// run; the judge and the single pass repeat the step-N distribution.
Script converging_script(int n_agents, int ibc_index, const LabelSpace& space);

/// Same shape as converging_script with a uniform block everywhere.
Script uniform_script(int n_agents, int ibc_index, const LabelSpace& space);

}  // namespace kairanban::fixtures
