// SPDX-License-Identifier: Apache-2.0
#include "hetplan/cli.hpp"

#include <chrono>
#include <iomanip>
#include <random>
#include <sstream>

#include "json.hpp"

#include "hetplan/cost_model.hpp"
#include "hetplan/errors.hpp"
#include "hetplan/search.hpp"

namespace hetplan {

using json = nlohmann::json;

namespace {

json breakdown_report(const CostBreakdown& bd) {
  json per_task = json::object();
  for (const auto& [id, tc] : bd.per_task) {
    per_task[std::to_string(id)] = {
        {"comp", tc.comp},         {"tp", tc.tp},   {"pp", tc.pp},
        {"dp", tc.dp},             {"bubble", tc.bubble}, {"hbm", tc.hbm},
        {"total", tc.total}};
  }
  return {{"per_task", per_task},
          {"reshard_s", bd.reshard_s},
          {"sync_s", bd.sync_s},
          {"end_to_end_s", bd.end_to_end_s},
          {"memory_feasible", bd.memory_feasible}};
}

void print_breakdown_text(const CostBreakdown& bd, std::ostream& out) {
  out << std::left << std::setw(6) << "task" << std::right << std::setw(12)
      << "comp" << std::setw(12) << "tp" << std::setw(12) << "pp"
      << std::setw(12) << "dp" << std::setw(12) << "bubble" << std::setw(12)
      << "hbm" << std::setw(12) << "total" << "\n";
  for (const auto& [id, tc] : bd.per_task) {
    out << std::left << std::setw(6) << id << std::right << std::fixed
        << std::setprecision(4) << std::setw(12) << tc.comp << std::setw(12)
        << tc.tp << std::setw(12) << tc.pp << std::setw(12) << tc.dp
        << std::setw(12) << tc.bubble << std::setw(12) << tc.hbm
        << std::setw(12) << tc.total << "\n";
  }
  out << "reshard_s    " << bd.reshard_s << "\n";
  out << "sync_s       " << bd.sync_s << "\n";
  out << "end_to_end_s " << bd.end_to_end_s << "\n";
  out << "memory_ok    " << (bd.memory_feasible ? "yes" : "no") << "\n";
  out.unsetf(std::ios::fixed);
}

int run_guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

SearchKnobs knobs_for(const std::string& knobs_path) {
  return knobs_path.empty() ? SearchKnobs{} : load_knobs(knobs_path);
}

}  // namespace

int cmd_plan(const PlanArgs& args, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&]() -> int {
    if (args.workflow_path.empty() || args.topology_path.empty()) {
      throw UsageError("plan requires --workflow and --topology");
    }
    const WorkflowGraph wf = load_workflow(args.workflow_path);
    const DeviceTopology topo = load_topology(args.topology_path);
    SearchKnobs knobs = knobs_for(args.knobs_path);
    if (args.budget.has_value()) {
      knobs.budget = *args.budget;
    }
    bool drew_seed = false;
    if (args.seed.has_value()) {
      knobs.seed = *args.seed;
    } else if (!knobs.seed_set) {
      knobs.seed = std::random_device{}();
      drew_seed = true;
    }
    if (knobs.budget < 1) {
      throw UsageError("budget must be >= 1");
    }

    const auto start = std::chrono::steady_clock::now();
    const SearchResult result = nested_sha_search(wf, topo, knobs);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();

    if (!result.plan.has_value()) {
      err << "no memory-feasible plan found for this workflow on this "
             "topology\n";
      return kExitInfeasible;
    }
    save_plan(*result.plan, &result.breakdown, args.out_path);

    json trace = json::array();
    for (const auto& [evals, cost] : result.state.trace) {
      trace.push_back({evals, cost});
    }
    json layouts = json::object();
    for (const auto& [id, l] : result.plan->layouts) {
      layouts[std::to_string(id)] = {{"dp", l.dp},
                                     {"pp", l.pp},
                                     {"tp", l.tp},
                                     {"stage_layers", l.stage_layers}};
    }
    json report = {{"seed", knobs.seed},
                   {"budget", knobs.budget},
                   {"consumed", result.state.consumed},
                   {"task_groupings", result.state.task_groupings},
                   {"arms", result.state.arms.size()},
                   {"final_cost_s", result.breakdown.end_to_end_s},
                   {"plan_file", args.out_path},
                   {"wall_clock_s", wall},
                   {"plan_summary",
                    {{"task_groups", result.plan->task_grouping.groups},
                     {"gpu_counts", result.plan->gpu_grouping.counts},
                     {"layouts", layouts}}},
                   {"trace", trace},
                   {"cost_breakdown", breakdown_report(result.breakdown)}};
    if (args.format == "text") {
      out << "seed           " << knobs.seed
          << (drew_seed ? "  (drawn)" : "") << "\n";
      out << "budget         " << knobs.budget << " (consumed "
          << result.state.consumed << ")\n";
      out << "task groupings " << result.state.task_groupings << ", arms "
          << result.state.arms.size() << "\n";
      out << "final cost     " << result.breakdown.end_to_end_s << " s\n";
      out << "wall clock     " << wall << " s\n";
      out << "plan file      " << args.out_path << "\n";
      out << "task groups    ";
      for (const auto& g : result.plan->task_grouping.groups) {
        out << "[";
        for (std::size_t i = 0; i < g.size(); ++i) {
          out << (i ? "," : "") << g[i];
        }
        out << "]";
      }
      out << "  gpu counts ";
      for (std::size_t i = 0; i < result.plan->gpu_grouping.counts.size();
           ++i) {
        out << (i ? "," : "") << result.plan->gpu_grouping.counts[i];
      }
      out << "\n";
      for (const auto& [id, l] : result.plan->layouts) {
        out << "  task " << id << ": dp=" << l.dp << " pp=" << l.pp
            << " tp=" << l.tp << "\n";
      }
      out << "incumbent trace (evals -> cost):\n";
      for (const auto& [evals, cost] : result.state.trace) {
        out << "  " << std::setw(8) << evals << "  " << cost << "\n";
      }
      print_breakdown_text(result.breakdown, out);
    } else {
      out << report.dump(2) << "\n";
    }
    return kExitOk;
  });
}

int cmd_estimate(const EstimateArgs& args, std::ostream& out,
                 std::ostream& err) {
  return run_guarded(err, [&]() -> int {
    if (args.plan_path.empty() || args.workflow_path.empty() ||
        args.topology_path.empty()) {
      throw UsageError("estimate requires --plan, --workflow and --topology");
    }
    const WorkflowGraph wf = load_workflow(args.workflow_path);
    const DeviceTopology topo = load_topology(args.topology_path);
    const SearchKnobs knobs = knobs_for(args.knobs_path);
    const ParsedPlan parsed = load_plan(args.plan_path);
    const CostBreakdown bd =
        end_to_end_cost(parsed.plan, wf, topo, knobs.cost_config());
    if (args.format == "text") {
      print_breakdown_text(bd, out);
    } else {
      out << breakdown_report(bd).dump(2) << "\n";
    }
    return kExitOk;
  });
}

int cmd_scenario(const ScenarioArgs& args, std::ostream& out,
                 std::ostream& err) {
  return run_guarded(err, [&]() -> int {
    ScenarioOptions opts;
    if (!args.gpus.empty()) {
      opts.inventory = parse_inventory(args.gpus);
    }
    bool drew_seed = false;
    if (args.seed.has_value()) {
      opts.seed = *args.seed;
    } else {
      opts.seed = std::random_device{}();
      drew_seed = true;
    }
    opts.node_size = args.node_size;
    opts.edge_models.clear();
    std::stringstream ss(args.edge_gpus);
    std::string model;
    while (std::getline(ss, model, ',')) {
      if (!model.empty()) {
        opts.edge_models.push_back(model);
      }
    }
    const DeviceTopology topo = generate_scenario(args.scenario_id, opts);
    save_topology(topo, args.out_path);
    out << "scenario " << args.scenario_id << ": " << topo.size()
        << " devices -> " << args.out_path << " (seed " << opts.seed
        << (drew_seed ? ", drawn" : "") << ")\n";
    return kExitOk;
  });
}

int cmd_compare(const CompareArgs& args, std::ostream& out,
                std::ostream& err) {
  return run_guarded(err, [&]() -> int {
    if (args.plan_paths.size() < 2) {
      throw UsageError("compare requires at least two plan files");
    }
    if (args.workflow_path.empty() || args.topology_path.empty()) {
      throw UsageError("compare requires --workflow and --topology");
    }
    const WorkflowGraph wf = load_workflow(args.workflow_path);
    const DeviceTopology topo = load_topology(args.topology_path);
    const SearchKnobs knobs = knobs_for(args.knobs_path);

    struct Entry {
      std::string path;
      CostBreakdown bd;
      std::size_t order;
    };
    std::vector<Entry> entries;
    for (const std::string& path : args.plan_paths) {
      const ParsedPlan parsed = load_plan(path);
      entries.push_back({path,
                         end_to_end_cost(parsed.plan, wf, topo,
                                         knobs.cost_config()),
                         entries.size()});
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) {
                       return a.bd.end_to_end_s < b.bd.end_to_end_s;
                     });
    const double best = entries.front().bd.end_to_end_s;
    if (args.format == "text") {
      out << std::left << std::setw(4) << "#" << std::setw(32) << "plan"
          << std::right << std::setw(14) << "cost_s" << std::setw(14)
          << "delta_s" << "\n";
      for (std::size_t i = 0; i < entries.size(); ++i) {
        out << std::left << std::setw(4) << i + 1 << std::setw(32)
            << entries[i].path << std::right << std::setw(14)
            << entries[i].bd.end_to_end_s << std::setw(14)
            << entries[i].bd.end_to_end_s - best << "\n";
      }
    } else {
      json ranked = json::array();
      for (const Entry& e : entries) {
        ranked.push_back({{"plan", e.path},
                          {"end_to_end_s", e.bd.end_to_end_s},
                          {"delta_s", e.bd.end_to_end_s - best},
                          {"cost_breakdown", breakdown_report(e.bd)}});
      }
      out << ranked.dump(2) << "\n";
    }
    return kExitOk;
  });
}

}  // namespace hetplan
