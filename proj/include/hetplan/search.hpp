// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hetplan/cost_model.hpp"
#include "hetplan/plan.hpp"
#include "hetplan/rng.hpp"

namespace hetplan {

struct SearchKnobs {
  std::int64_t budget = 1000;
  std::uint64_t seed = 0;
  int population = 16;
  double locality_bias = 0.8;
  int quantize_gpu_counts = 1;
  std::string level1_filter = "off";  // "off" | "adjacent"
  int level1_cap = 0;                 // 0 = keep all task groupings
  // GPU-grouping arms kept per task grouping; compositions beyond this many
  // are sampled (seeded) instead of enumerated.
  int gg_arm_cap = 64;
  int swap_pair_sample = 8;
  bool balance_data = true;
  bool balance_layers = true;
  bool balance_seqlen = true;
  bool recompute = true;
  double reshard_override = -1.0;
  double sync_override = -1.0;
  double exhaustive_cap = 1e6;
  bool seed_set = false;  // whether the knobs file pinned a seed

  CostModelConfig cost_config() const;
};

SearchKnobs parse_knobs_json(const std::string& text);
SearchKnobs load_knobs(const std::string& path);

// ---- level enumerations ----

// Level 1: all set partitions of the workflow's task ids (Bell-number many),
// optionally filtered; with level1_filter "adjacent", non-singleton groups
// must contain at least one dependency edge.
std::vector<TaskGrouping> enumerate_task_groupings(
    const WorkflowGraph& wf,
    const std::function<bool(const TaskGrouping&)>& filter = {});

// Level 2: device counts per group, i.e. compositions of N.
std::vector<GpuGrouping> enumerate_gpu_groupings(int total_gpus,
                                                 int num_groups,
                                                 int quantum = 1);

// Level 4: all (dp, pp, tp) with dp*pp*tp == group_size, pp bounded by the
// layer count and tp by the largest node (tensor shards stay on one node).
std::vector<ParallelLayout> enumerate_layouts(int group_size,
                                              const ModelSpec& model,
                                              const BatchConfig& batch,
                                              int max_tp_per_node);

// Level 3: device ids per task group honoring the counts; locality_bias 1
// keeps nodes/regions contiguous, 0 is a uniform shuffle.
std::vector<std::vector<std::string>> random_medium_assignment(
    const GpuGrouping& gg, const DeviceTopology& topo, double locality_bias,
    Rng& rng);

// Level 5: tasklet -> device bijection over the group's devices; tensor
// shards prefer co-resident nodes.
std::vector<std::string> random_fine_assignment(
    const std::vector<std::string>& group_devices, const ParallelLayout& layout,
    const DeviceTopology& topo, Rng& rng);

// ---- search state & results ----

struct ArmRecord {
  std::size_t tg_index = 0;
  std::size_t gg_index = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  std::int64_t evals = 0;
};

struct HalvingEvent {
  int level = 0;  // 1 task groupings, 2 gpu groupings
  std::size_t before = 0;
  std::size_t after = 0;
  double survivor_worst = 0;   // max best-cost among survivors
  double eliminated_best = 0;  // min best-cost among eliminated
};

struct SearchState {
  std::int64_t budget = 0;
  std::int64_t consumed = 0;
  std::uint64_t seed = 0;
  std::vector<std::int64_t> b_m;  // per outer round
  std::vector<std::pair<std::int64_t, double>> trace;  // consumed -> incumbent
  std::vector<ArmRecord> arms;
  std::vector<HalvingEvent> halvings;
  std::size_t task_groupings = 0;
};

struct SearchResult {
  std::optional<Plan> plan;
  CostBreakdown breakdown;
  SearchState state;
};

// Nested successive halving over task groupings (outer) and GPU groupings
// (inner); candidates inside an arm come from the genetic search. Budget is
// counted in candidate evaluations. tg_override restricts the level-1 arms
// (testing / pruning hook).
SearchResult nested_sha_search(
    const WorkflowGraph& wf, const DeviceTopology& topo,
    const SearchKnobs& knobs,
    const std::vector<TaskGrouping>* tg_override = nullptr);

struct GaResult {
  std::optional<Plan> plan;
  CostBreakdown breakdown;
  double cost = std::numeric_limits<double>::infinity();
  std::int64_t evals = 0;
};

// Genetic search within one (task grouping, GPU grouping) arm: random
// medium/fine assignments over enumerated layouts as the population, mutation
// plus improving device swaps across task groups (level 3) and across
// tasklet slots within a task (level 5). Consumes exactly budget_slice
// evaluations while feasible candidates exist.
GaResult ga_search(const TaskGrouping& tg, const GpuGrouping& gg,
                   const WorkflowGraph& wf, const DeviceTopology& topo,
                   std::int64_t budget_slice, Rng rng,
                   const SearchKnobs& knobs);

struct ExhaustiveResult {
  std::optional<Plan> plan;
  CostBreakdown breakdown;
  double cost = std::numeric_limits<double>::infinity();
  std::int64_t explored = 0;  // unique plans evaluated
};

// Full enumeration oracle for tiny instances: every task grouping x
// composition x layout x assignment, deduplicated by identical-device
// symmetry. Throws InputError when the estimated raw space exceeds
// knobs.exhaustive_cap.
ExhaustiveResult exhaustive_search(const WorkflowGraph& wf,
                                   const DeviceTopology& topo,
                                   const SearchKnobs& knobs);

// Estimated raw enumeration size (upper bound, pre-dedup).
double exhaustive_space_estimate(const WorkflowGraph& wf,
                                 const DeviceTopology& topo,
                                 const SearchKnobs& knobs);

}  // namespace hetplan
