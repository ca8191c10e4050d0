// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "hetplan/cost_model.hpp"
#include "hetplan/plan.hpp"

namespace hetplan {

// Per-replica weights proportional to each replica's processing rate
// (inverse per-micro-batch time), normalized to sum to dp.
std::vector<double> rate_weights(const WorkflowGraph& wf,
                                 const ResolvedTask& rt,
                                 const DeviceTopology& topo,
                                 const CostModelConfig& cfg = {});

// Data-level balancing: re-weights DP replicas of generation tasks so faster
// replicas take more micro-batches. Keeps the input plan unless the
// end-to-end estimate strictly improves.
Plan balance_data(const Plan& plan, const WorkflowGraph& wf,
                  const DeviceTopology& topo, const CostModelConfig& cfg = {});

// Layer-level balancing: re-splits pipeline stage layers. Exact enumeration
// when pp * nl <= 64, greedy one-layer transfers from the bottleneck stage
// otherwise. Keeps the input plan unless it strictly improves.
Plan balance_layers(const Plan& plan, const WorkflowGraph& wf,
                    const DeviceTopology& topo,
                    const CostModelConfig& cfg = {});

struct SeqlenBucket {
  std::int64_t length = 0;
  std::int64_t count = 0;
};

// Maps sequence-length buckets (sorted ascending) to DP replica indices so
// that token load is proportional to replica rate; longest buckets go to the
// fastest replicas.
std::map<std::int64_t, int> assign_by_seqlen(
    const std::vector<SeqlenBucket>& histogram,
    const std::vector<double>& replica_rates);

}  // namespace hetplan
