// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hetplan/topology.hpp"
#include "hetplan/workflow.hpp"

namespace hetplan {

// Level-1 result: disjoint task groups covering every task id exactly once.
struct TaskGrouping {
  std::vector<std::vector<int>> groups;
  void validate(const WorkflowGraph& wf) const;
  int group_of(int task_id) const;  // -1 when absent
};

// Level-2 result: device counts per task group, summing to |topology|.
struct GpuGrouping {
  std::vector<int> counts;
};

struct ParallelLayout {
  int dp = 1;
  int pp = 1;
  int tp = 1;
  std::vector<int> stage_layers;              // per stage, sums to nl
  std::vector<double> replica_batch_weights;  // per replica, sums to dp

  int size() const { return dp * pp * tp; }
  int flat(int replica, int stage, int shard) const {
    return (replica * pp + stage) * tp + shard;
  }
  void validate(std::int64_t num_layers) const;
};

// Uniform stage split (remainder layers go to the leading stages) and unit
// batch weights.
ParallelLayout make_layout(int dp, int pp, int tp, std::int64_t num_layers);

struct TaskletCoord {
  int task = 0;
  int replica = 0;
  int stage = 0;
  int shard = 0;
  auto operator<=>(const TaskletCoord&) const = default;
};

struct Provenance {
  std::uint64_t seed = 0;
  std::int64_t budget = 0;  // candidate evaluations consumed
  bool operator==(const Provenance&) const = default;
};

struct Plan {
  TaskGrouping task_grouping;
  GpuGrouping gpu_grouping;
  std::map<int, ParallelLayout> layouts;  // by task id
  // Flat device ids per task, indexed by ParallelLayout::flat.
  std::map<int, std::vector<std::string>> assignment;
  Provenance provenance;
  double estimated_cost_s = -1.0;

  bool operator==(const Plan& other) const;
};

// Tasklet coordinates implied by (grouping, layouts); rejects layouts whose
// dp*pp*tp does not match the owning group's device count.
std::vector<TaskletCoord> expand_tasklets(const WorkflowGraph& wf,
                                          const TaskGrouping& grouping,
                                          const GpuGrouping& gpu_grouping,
                                          const std::map<int, ParallelLayout>& layouts);

// Memory model coefficients. The scheduling constraint C3 only names
// model_memory and working_mem; these defaults are the stand-in used
// throughout: mixed-precision Adam training state at 18 bytes/param,
// BF16 weights at 2 bytes/param, KV cache for dbs_cap micro-batches of
// in-flight sequences, and a recompute-friendly activation estimate.
struct MemoryModel {
  double train_bytes_per_param = 18.0;
  double infer_bytes_per_param = 2.0;
  double kv_bytes_per_elem = 2.0;
  int dbs_cap = 1;
  double act_factor = 4.0;
};

// Persistent bytes for one tasklet of `task` at pipeline stage `stage`.
double model_memory_bytes(const RlTask& task, const BatchConfig& batch,
                          const ParallelLayout& layout, int stage,
                          const MemoryModel& mm);
// Peak transient bytes (activations) for one tasklet at `stage`.
double working_memory_bytes(const RlTask& task, const BatchConfig& batch,
                            const ParallelLayout& layout, int stage,
                            const MemoryModel& mm);
// Weights-only residency (no KV cache, no activations); what stays on the
// device between micro-batches.
double weights_memory_bytes(const RlTask& task, const ParallelLayout& layout,
                            int stage, const MemoryModel& mm);
// KV-cache bytes for a single in-flight sequence at `stage`.
double kv_bytes_per_sequence(const RlTask& task, const BatchConfig& batch,
                             const ParallelLayout& layout, int stage,
                             const MemoryModel& mm);

struct MemoryViolation {
  std::string device_id;
  double required_bytes = 0;
  double capacity_bytes = 0;
};

// C3: per device, sum of persistent model memory plus the max working set
// must fit. Returns every violating device (empty means feasible).
std::vector<MemoryViolation> check_memory(const Plan& plan,
                                          const DeviceTopology& topo,
                                          const WorkflowGraph& wf,
                                          const MemoryModel& mm = {});

// Plan bound to a topology: device indices instead of ids, plus per-replica
// micro-batch counts. Throws InputError when the plan is structurally
// invalid against (workflow, topology): unknown devices, missing layouts,
// size mismatches, C1/C2 violations.
struct ResolvedTask {
  int task_id = 0;
  const RlTask* task = nullptr;
  const ParallelLayout* layout = nullptr;
  std::vector<int> devices;            // flat, ParallelLayout::flat order
  std::vector<std::int64_t> nm_replica;
  std::int64_t nm_base = 0;
};

struct ResolvedPlan {
  std::vector<ResolvedTask> tasks;              // workflow task order
  std::vector<std::vector<int>> group_devices;  // per task group
};

ResolvedPlan resolve_plan(const Plan& plan, const WorkflowGraph& wf,
                          const DeviceTopology& topo);

// Splits dp*nm_base micro-batches across replicas proportionally to the
// weights (largest remainder, every replica >= 1). Total is preserved.
std::vector<std::int64_t> apportion_microbatches(
    std::int64_t nm_base, const std::vector<double>& weights);

// ---- cost breakdown (computed by the cost model, carried in plan files) ----

struct TaskCost {
  double comp = 0, tp = 0, pp = 0, dp = 0, bubble = 0, hbm = 0;
  double total = 0;
};

struct CostBreakdown {
  std::map<int, TaskCost> per_task;  // by task id
  double reshard_s = 0;              // sync modes
  double sync_s = 0;                 // async modes
  double end_to_end_s = 0;
  bool memory_feasible = true;

  bool operator==(const CostBreakdown&) const;
};

std::string serialize_plan(const Plan& plan,
                           const CostBreakdown* breakdown = nullptr);
void save_plan(const Plan& plan, const CostBreakdown* breakdown,
               const std::string& path);

struct ParsedPlan {
  Plan plan;
  std::optional<CostBreakdown> breakdown;
};

ParsedPlan parse_plan_json(const std::string& text);
ParsedPlan load_plan(const std::string& path);

}  // namespace hetplan
