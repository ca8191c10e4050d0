// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace hetplan {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitInput = 3;
inline constexpr int kExitInfeasible = 4;
inline constexpr int kExitInternal = 5;

struct PlanArgs {
  std::string workflow_path;
  std::string topology_path;
  std::string knobs_path;  // optional
  std::string out_path = "plan.json";
  std::optional<std::int64_t> budget;
  std::optional<std::uint64_t> seed;
  std::string format = "json";  // json | text
};

struct EstimateArgs {
  std::string plan_path;
  std::string workflow_path;
  std::string topology_path;
  std::string knobs_path;  // optional, to reproduce non-default cost settings
  std::string format = "json";
};

struct ScenarioArgs {
  int scenario_id = 0;
  std::string gpus;  // "24xA100,24xL40S,16xL4"; empty = default inventory
  std::optional<std::uint64_t> seed;
  std::string out_path = "topology.json";
  int node_size = 8;
  std::string edge_gpus = "L4";  // scenario 2 edge subset, comma separated
};

struct CompareArgs {
  std::vector<std::string> plan_paths;
  std::string workflow_path;
  std::string topology_path;
  std::string knobs_path;  // optional
  std::string format = "json";
};

// Searches for a plan, writes the plan file, prints the run report.
int cmd_plan(const PlanArgs& args, std::ostream& out, std::ostream& err);
// Re-estimates a plan file; no search.
int cmd_estimate(const EstimateArgs& args, std::ostream& out,
                 std::ostream& err);
// Writes a synthetic scenario topology.
int cmd_scenario(const ScenarioArgs& args, std::ostream& out,
                 std::ostream& err);
// Ranks plan files by estimated cost.
int cmd_compare(const CompareArgs& args, std::ostream& out, std::ostream& err);

}  // namespace hetplan
