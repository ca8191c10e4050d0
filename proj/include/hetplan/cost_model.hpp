// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hetplan/plan.hpp"
#include "hetplan/topology.hpp"
#include "hetplan/workflow.hpp"

namespace hetplan {

struct CostModelConfig {
  // Training tasks re-run the forward pass during backward; this selects the
  // matching all-reduce count (6x per layer instead of 4x).
  bool recompute = true;
  // Weight transfer between generation and training groups. Negative values
  // derive a single-path transfer bound from the topology; >= 0 fixes the
  // cost directly.
  double reshard_override = -1.0;
  double sync_override = -1.0;
  // Fixed decoding batch size (testing hook). <= 0 derives dbs per device
  // from free memory after weights.
  double dbs_override = -1.0;
  MemoryModel memory;
};

// ---- communication volumes (bytes) ----

double tp_comm_volume(int precision_bytes, std::int64_t mbs,
                      std::int64_t seq_total, std::int64_t h1, int tp);
double pp_comm_volume(int precision_bytes, std::int64_t mbs,
                      std::int64_t seq_total, std::int64_t h1);
double dp_comm_volume(int precision_bytes, std::int64_t nl_j, std::int64_t h1,
                      std::int64_t h2, int dp, int tp);

// FLOPs of one transformer layer forward pass per sample at sequence length s.
double layer_flops(std::int64_t s, std::int64_t h1, std::int64_t h2);

// ---- pass multipliers per task kind ----

double tp_pass_factor(TaskKind kind, bool recompute);  // 2 | 6 | 4
double pp_pass_factor(TaskKind kind);                  // 1 | 2
double comp_pass_factor(TaskKind kind);                // 1 | 3
// Generation estimates compute on the prompt only.
std::int64_t comp_seq(TaskKind kind, const BatchConfig& batch);

// ---- communication primitives ----

// Bottleneck cost of the best ring over `devices`: min over Hamiltonian
// cycles of max edge (alpha + volume/beta). Exact enumeration up to 8
// devices, nearest-neighbor + 2-opt above.
double min_ring_bottleneck(std::span<const int> devices, double volume_bytes,
                           const DeviceTopology& topo);

// Cheapest cross-set device pair, alpha + volume/beta.
double min_pair_cost(std::span<const int> src, std::span<const int> dst,
                     double volume_bytes, const DeviceTopology& topo);

// ---- per-operation costs (exposed for tests; task_cost composes them) ----

double compute_cost(TaskKind kind, std::int64_t nm, std::int64_t mbs,
                    std::int64_t nl_j, double layer_flops_fwd, double comp_d,
                    int tp);
double hbm_decode_cost(TaskKind kind, std::int64_t seq_out, std::int64_t nm,
                       std::int64_t mbs, int precision_bytes, std::int64_t nl_j,
                       std::int64_t h1, std::int64_t h2, double dbs,
                       double hbm_d, int tp);
// stage_costs holds per-stage (comp + tp + pp) sums; the first stage is
// excluded from the bubble.
double bubble_cost(std::span<const double> stage_costs, std::int64_t nm);

// Phi: max + (1 - eta) * (sum - max). eta 0 = sequential, 1 = fully parallel.
double aggregate_phi(std::span<const double> costs, double eta);

// Single-path transfer bound between two device groups: cheapest bridging
// pair charged with `bytes`.
double bridge_transfer_cost(double bytes, std::span<const int> src,
                            std::span<const int> dst,
                            const DeviceTopology& topo);

// ---- task- and workflow-level evaluation ----

// Per-stage components of one task evaluation, kept around for the load
// balancer (per-replica rates, per-stage sums).
struct StagePiece {
  double comp = 0, tp = 0, pp = 0, hbm = 0;
  double sum() const { return comp + tp + pp + hbm; }
};

struct TaskCostDetail {
  TaskCost agg;
  // [replica][stage]
  std::vector<std::vector<StagePiece>> stage;
  std::vector<double> bubble_replica;
  std::vector<std::int64_t> nm_replica;
};

// resident_weight_bytes (per device, optional) feeds the decoding batch size
// derivation; end_to_end_cost passes whole-plan residency, standalone calls
// fall back to the task's own weights.
TaskCostDetail task_cost_detail(const WorkflowGraph& wf,
                                const ResolvedTask& rt,
                                const DeviceTopology& topo,
                                const CostModelConfig& cfg = {},
                                std::span<const double> resident_weight_bytes = {});

TaskCost task_cost(const WorkflowGraph& wf, const ResolvedTask& rt,
                   const DeviceTopology& topo,
                   const CostModelConfig& cfg = {});

// Full breakdown with the (algorithm, mode) end-to-end composition. Memory
// violations do not abort: the breakdown is computed and flagged.
CostBreakdown end_to_end_cost(const Plan& plan, const WorkflowGraph& wf,
                              const DeviceTopology& topo,
                              const CostModelConfig& cfg = {});

// Composition of already-known task totals; used by end_to_end_cost and by
// tests that inject synthetic task costs.
double compose_end_to_end(const WorkflowGraph& wf,
                          const std::map<int, double>& task_totals,
                          double reshard_or_sync, double eta);

}  // namespace hetplan
