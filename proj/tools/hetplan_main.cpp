// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "CLI11.hpp"

#include "hetplan/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"hetplan: scheduling planner for RL fine-tuning workflows on "
               "heterogeneous GPU pools"};
  app.require_subcommand(1);

  hetplan::PlanArgs plan_args;
  std::int64_t budget_flag = -1;
  std::int64_t plan_seed_flag = -1;
  auto* plan = app.add_subcommand("plan", "search for an execution plan");
  plan->add_option("--workflow", plan_args.workflow_path, "workflow JSON")
      ->required();
  plan->add_option("--topology", plan_args.topology_path, "topology JSON")
      ->required();
  plan->add_option("--knobs", plan_args.knobs_path, "search knobs JSON");
  plan->add_option("--budget", budget_flag, "candidate evaluation budget");
  plan->add_option("--seed", plan_seed_flag, "search seed");
  plan->add_option("--out", plan_args.out_path, "plan output path");
  plan->add_option("--format", plan_args.format, "report format: json|text")
      ->check(CLI::IsMember({"json", "text"}));

  hetplan::EstimateArgs est_args;
  auto* estimate =
      app.add_subcommand("estimate", "estimate the cost of a plan file");
  estimate->add_option("--plan", est_args.plan_path, "plan JSON")->required();
  estimate->add_option("--workflow", est_args.workflow_path, "workflow JSON")
      ->required();
  estimate->add_option("--topology", est_args.topology_path, "topology JSON")
      ->required();
  estimate->add_option("--knobs", est_args.knobs_path, "knobs JSON");
  estimate->add_option("--format", est_args.format, "json|text")
      ->check(CLI::IsMember({"json", "text"}));

  hetplan::ScenarioArgs scen_args;
  std::int64_t scen_seed_flag = -1;
  auto* scenario =
      app.add_subcommand("scenario", "write a synthetic scenario topology");
  scenario->add_option("--id", scen_args.scenario_id, "scenario id (1-4)")
      ->required();
  scenario->add_option("--gpus", scen_args.gpus,
                       "inventory, e.g. 24xA100,24xL40S,16xL4");
  scenario->add_option("--seed", scen_seed_flag, "link sampling seed");
  scenario->add_option("--out", scen_args.out_path, "topology output path");
  scenario->add_option("--node-size", scen_args.node_size,
                       "GPUs per node in scenario 1");
  scenario->add_option("--edge-gpus", scen_args.edge_gpus,
                       "GPU models at the edge in scenario 2");

  hetplan::CompareArgs cmp_args;
  auto* compare = app.add_subcommand("compare", "rank plan files by cost");
  compare->add_option("plans", cmp_args.plan_paths, "plan files (>= 2)")
      ->required();
  compare->add_option("--workflow", cmp_args.workflow_path, "workflow JSON")
      ->required();
  compare->add_option("--topology", cmp_args.topology_path, "topology JSON")
      ->required();
  compare->add_option("--knobs", cmp_args.knobs_path, "knobs JSON");
  compare->add_option("--format", cmp_args.format, "json|text")
      ->check(CLI::IsMember({"json", "text"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return hetplan::kExitUsage;
  }

  if (plan->parsed()) {
    if (budget_flag >= 0) {
      plan_args.budget = budget_flag;
    }
    if (plan_seed_flag >= 0) {
      plan_args.seed = static_cast<std::uint64_t>(plan_seed_flag);
    }
    return hetplan::cmd_plan(plan_args, std::cout, std::cerr);
  }
  if (estimate->parsed()) {
    return hetplan::cmd_estimate(est_args, std::cout, std::cerr);
  }
  if (scenario->parsed()) {
    if (scen_seed_flag >= 0) {
      scen_args.seed = static_cast<std::uint64_t>(scen_seed_flag);
    }
    return hetplan::cmd_scenario(scen_args, std::cout, std::cerr);
  }
  if (compare->parsed()) {
    return hetplan::cmd_compare(cmp_args, std::cout, std::cerr);
  }
  return hetplan::kExitUsage;
}
