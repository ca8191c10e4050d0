// SPDX-License-Identifier: Apache-2.0
#include "hetplan/balance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hetplan/combinatorics.hpp"
#include "hetplan/errors.hpp"

namespace hetplan {

std::vector<double> rate_weights(const WorkflowGraph& wf,
                                 const ResolvedTask& rt,
                                 const DeviceTopology& topo,
                                 const CostModelConfig& cfg) {
  const TaskCostDetail detail = task_cost_detail(wf, rt, topo, cfg);
  const int dp = rt.layout->dp;
  std::vector<double> rates(dp);
  for (int i = 0; i < dp; ++i) {
    double bottleneck = 0.0;
    for (int j = 0; j < rt.layout->pp; ++j) {
      bottleneck = std::max(bottleneck, detail.stage[i][j].sum());
    }
    const double per_mb = bottleneck / static_cast<double>(detail.nm_replica[i]);
    rates[i] = per_mb > 0 ? 1.0 / per_mb : 1.0;
  }
  const double sum = std::accumulate(rates.begin(), rates.end(), 0.0);
  std::vector<double> weights(dp);
  for (int i = 0; i < dp; ++i) {
    weights[i] = static_cast<double>(dp) * rates[i] / sum;
  }
  return weights;
}

Plan balance_data(const Plan& plan, const WorkflowGraph& wf,
                  const DeviceTopology& topo, const CostModelConfig& cfg) {
  Plan candidate = plan;
  bool touched = false;
  const ResolvedPlan rp = resolve_plan(plan, wf, topo);
  for (const ResolvedTask& rt : rp.tasks) {
    if (rt.task->kind != TaskKind::kGeneration || rt.layout->dp < 2) {
      continue;
    }
    std::vector<double> weights = rate_weights(wf, rt, topo, cfg);
    candidate.layouts.at(rt.task_id).replica_batch_weights = std::move(weights);
    touched = true;
  }
  if (!touched) {
    return plan;
  }
  const double before = end_to_end_cost(plan, wf, topo, cfg).end_to_end_s;
  const double after = end_to_end_cost(candidate, wf, topo, cfg).end_to_end_s;
  return after < before ? candidate : plan;
}

namespace {

// Task total under a trial stage split; infinite when the split breaks C3.
double task_total_with_split(const WorkflowGraph& wf, const Plan& plan,
                             const DeviceTopology& topo,
                             const CostModelConfig& cfg, int task_id,
                             const std::vector<int>& stage_layers) {
  Plan trial = plan;
  trial.layouts.at(task_id).stage_layers = stage_layers;
  if (!check_memory(trial, topo, wf, cfg.memory).empty()) {
    return std::numeric_limits<double>::infinity();
  }
  const ResolvedPlan rp = resolve_plan(trial, wf, topo);
  for (const ResolvedTask& rt : rp.tasks) {
    if (rt.task_id == task_id) {
      return task_cost(wf, rt, topo, cfg).total;
    }
  }
  throw InputError("task not found while balancing layers");
}

}  // namespace

Plan balance_layers(const Plan& plan, const WorkflowGraph& wf,
                    const DeviceTopology& topo, const CostModelConfig& cfg) {
  Plan candidate = plan;
  bool touched = false;
  for (auto& [task_id, layout] : candidate.layouts) {
    const std::int64_t nl = wf.task(task_id).model.num_layers;
    if (layout.pp < 2 || nl == layout.pp) {
      continue;  // nothing movable
    }
    std::vector<int> best_split = layout.stage_layers;
    double best = task_total_with_split(wf, candidate, topo, cfg, task_id,
                                        best_split);
    if (static_cast<std::int64_t>(layout.pp) * nl <= 64) {
      for (const auto& split :
           compositions(static_cast<int>(nl), layout.pp)) {
        const double c =
            task_total_with_split(wf, candidate, topo, cfg, task_id, split);
        if (c < best) {
          best = c;
          best_split = split;
        }
      }
    } else {
      // greedy: shed one layer from the bottleneck stage to a neighbor
      while (true) {
        const ResolvedPlan rp = resolve_plan(candidate, wf, topo);
        const ResolvedTask* rt = nullptr;
        for (const ResolvedTask& r : rp.tasks) {
          if (r.task_id == task_id) {
            rt = &r;
          }
        }
        const TaskCostDetail detail = task_cost_detail(wf, *rt, topo, cfg);
        int bottleneck = 0;
        double worst = -1.0;
        for (int j = 0; j < layout.pp; ++j) {
          double load = 0.0;
          for (int i = 0; i < layout.dp; ++i) {
            load = std::max(load, detail.stage[i][j].sum());
          }
          if (load > worst) {
            worst = load;
            bottleneck = j;
          }
        }
        if (best_split[bottleneck] <= 1) {
          break;
        }
        double step_best = best;
        std::vector<int> step_split;
        for (int nb : {bottleneck - 1, bottleneck + 1}) {
          if (nb < 0 || nb >= layout.pp) {
            continue;
          }
          std::vector<int> split = best_split;
          --split[bottleneck];
          ++split[nb];
          const double c =
              task_total_with_split(wf, candidate, topo, cfg, task_id, split);
          if (c < step_best) {
            step_best = c;
            step_split = split;
          }
        }
        if (step_split.empty()) {
          break;
        }
        best = step_best;
        best_split = step_split;
        candidate.layouts.at(task_id).stage_layers = best_split;
      }
    }
    if (best_split != layout.stage_layers) {
      layout.stage_layers = best_split;
      touched = true;
    }
  }
  if (!touched) {
    return plan;
  }
  if (!check_memory(candidate, topo, wf, cfg.memory).empty()) {
    return plan;
  }
  const double before = end_to_end_cost(plan, wf, topo, cfg).end_to_end_s;
  const double after = end_to_end_cost(candidate, wf, topo, cfg).end_to_end_s;
  return after < before ? candidate : plan;
}

std::map<std::int64_t, int> assign_by_seqlen(
    const std::vector<SeqlenBucket>& histogram,
    const std::vector<double>& replica_rates) {
  if (histogram.empty()) {
    throw InputError("sequence-length histogram must be non-empty");
  }
  for (std::size_t b = 1; b < histogram.size(); ++b) {
    if (histogram[b].length <= histogram[b - 1].length) {
      throw InputError("histogram buckets must be sorted ascending");
    }
  }
  const int n = static_cast<int>(replica_rates.size());
  std::vector<double> load(n, 0.0);
  std::map<std::int64_t, int> out;
  // longest buckets first; each goes to the replica that finishes it soonest
  for (auto it = histogram.rbegin(); it != histogram.rend(); ++it) {
    const double tokens =
        static_cast<double>(it->length) * static_cast<double>(it->count);
    int best = 0;
    double best_finish = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      const double finish = (load[i] + tokens) / replica_rates[i];
      if (finish < best_finish) {
        best_finish = finish;
        best = i;
      }
    }
    load[best] += tokens;
    out[it->length] = best;
  }
  return out;
}

}  // namespace hetplan
