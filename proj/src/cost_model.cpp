// SPDX-License-Identifier: Apache-2.0
#include "hetplan/cost_model.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <set>

#include "hetplan/errors.hpp"

namespace hetplan {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double edge_cost(const DeviceTopology& topo, int a, int b, double volume) {
  const Link& l = topo.link(a, b);
  return l.latency_s + volume / l.bandwidth_bps;
}

// Nearest-neighbor construction followed by 2-opt on the bottleneck
// objective. A reversal only swaps the two boundary edges (links are
// symmetric), so the bottleneck is maintained incrementally via a multiset.
// Deterministic: starts at the first device, scans in index order.
double heuristic_ring(std::span<const int> devices, double volume,
                      const DeviceTopology& topo, std::vector<int>* tour_out) {
  const int n = static_cast<int>(devices.size());
  std::vector<int> tour{devices[0]};
  std::vector<bool> used(n, false);
  used[0] = true;
  for (int step = 1; step < n; ++step) {
    int best = -1;
    double best_cost = kInf;
    for (int i = 0; i < n; ++i) {
      if (!used[i]) {
        double c = edge_cost(topo, tour.back(), devices[i], volume);
        if (c < best_cost) {
          best_cost = c;
          best = i;
        }
      }
    }
    used[best] = true;
    tour.push_back(devices[best]);
  }

  std::vector<double> edge(n);  // edge[i] = cost(tour[i], tour[i+1 mod n])
  std::multiset<double> costs;
  for (int i = 0; i < n; ++i) {
    edge[i] = edge_cost(topo, tour[i], tour[(i + 1) % n], volume);
    costs.insert(edge[i]);
  }
  double bottleneck = *costs.rbegin();
  for (int pass = 0; pass < 8 && bottleneck > 0; ++pass) {
    bool improved = false;
    for (int i = 1; i < n - 1; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const double new1 = edge_cost(topo, tour[i - 1], tour[j], volume);
        const double new2 =
            edge_cost(topo, tour[i], tour[(j + 1) % n], volume);
        costs.erase(costs.find(edge[i - 1]));
        costs.erase(costs.find(edge[j]));
        const double rest = costs.empty() ? 0.0 : *costs.rbegin();
        const double cand = std::max({new1, new2, rest});
        if (cand < bottleneck) {
          std::reverse(tour.begin() + i, tour.begin() + j + 1);
          std::reverse(edge.begin() + i, edge.begin() + j);
          edge[i - 1] = new1;
          edge[j] = new2;
          costs.insert(new1);
          costs.insert(new2);
          bottleneck = cand;
          improved = true;
        } else {
          costs.insert(edge[i - 1]);
          costs.insert(edge[j]);
        }
      }
    }
    if (!improved) {
      break;
    }
  }
  if (tour_out != nullptr) {
    *tour_out = std::move(tour);
  }
  return bottleneck;
}

// Exact min-bottleneck Hamiltonian cycle via DFS with max-edge pruning,
// seeded with the heuristic tour as the upper bound.
struct RingSearch {
  const DeviceTopology& topo;
  std::span<const int> devices;
  double volume;
  double best;
  std::vector<int> path;
  std::vector<bool> used;

  void dfs(double cur_max) {
    if (cur_max >= best) {
      return;
    }
    const int n = static_cast<int>(devices.size());
    if (static_cast<int>(path.size()) == n) {
      best = std::min(
          best,
          std::max(cur_max, edge_cost(topo, path.back(), path[0], volume)));
      return;
    }
    for (int i = 1; i < n; ++i) {
      if (!used[i]) {
        used[i] = true;
        path.push_back(devices[i]);
        dfs(std::max(cur_max,
                     edge_cost(topo, path[path.size() - 2], path.back(),
                               volume)));
        path.pop_back();
        used[i] = false;
      }
    }
  }
};

}  // namespace

double tp_comm_volume(int precision_bytes, std::int64_t mbs,
                      std::int64_t seq_total, std::int64_t h1, int tp) {
  return static_cast<double>(precision_bytes) * static_cast<double>(mbs) *
         static_cast<double>(seq_total) * static_cast<double>(h1) *
         (2.0 * (tp - 1) / tp);
}

double pp_comm_volume(int precision_bytes, std::int64_t mbs,
                      std::int64_t seq_total, std::int64_t h1) {
  return static_cast<double>(precision_bytes) * static_cast<double>(mbs) *
         static_cast<double>(seq_total) * static_cast<double>(h1);
}

double dp_comm_volume(int precision_bytes, std::int64_t nl_j, std::int64_t h1,
                      std::int64_t h2, int dp, int tp) {
  return static_cast<double>(precision_bytes) * static_cast<double>(nl_j) *
         (4.0 * static_cast<double>(h1) * static_cast<double>(h1) +
          3.0 * static_cast<double>(h1) * static_cast<double>(h2)) *
         (2.0 * (dp - 1) / (static_cast<double>(dp) * tp));
}

double layer_flops(std::int64_t s, std::int64_t h1, std::int64_t h2) {
  const double sd = static_cast<double>(s);
  const double h1d = static_cast<double>(h1);
  const double h2d = static_cast<double>(h2);
  return 2.0 * 4.0 * sd * h1d * h1d   // qkvo projections
         + 2.0 * 2.0 * sd * sd * h1d  // attention scores + values
         + 2.0 * 3.0 * sd * h1d * h2d;  // gated mlp
}

double tp_pass_factor(TaskKind kind, bool recompute) {
  if (kind != TaskKind::kTraining) {
    return 2.0;
  }
  return recompute ? 6.0 : 4.0;
}

double pp_pass_factor(TaskKind kind) {
  return kind == TaskKind::kTraining ? 2.0 : 1.0;
}

double comp_pass_factor(TaskKind kind) {
  return kind == TaskKind::kTraining ? 3.0 : 1.0;
}

std::int64_t comp_seq(TaskKind kind, const BatchConfig& batch) {
  return kind == TaskKind::kGeneration ? batch.seq_in
                                       : batch.seq_in + batch.seq_out;
}

double min_ring_bottleneck(std::span<const int> devices, double volume_bytes,
                           const DeviceTopology& topo) {
  const int n = static_cast<int>(devices.size());
  if (n < 1) {
    throw InputError("ring over an empty device set");
  }
  for (int d : devices) {
    if (d < 0 || d >= topo.size()) {
      throw InputError("ring over a device index outside the topology");
    }
  }
  if (n == 1) {
    return 0.0;
  }
  if (n == 2) {
    return edge_cost(topo, devices[0], devices[1], volume_bytes);
  }
  std::vector<int> tour;
  double ub = heuristic_ring(devices, volume_bytes, topo, &tour);
  if (n > 8) {
    return ub;
  }
  RingSearch search{topo, devices, volume_bytes, ub, {devices[0]},
                    std::vector<bool>(n, false)};
  search.used[0] = true;
  search.path.reserve(n);
  search.dfs(0.0);
  return search.best;
}

double min_pair_cost(std::span<const int> src, std::span<const int> dst,
                     double volume_bytes, const DeviceTopology& topo) {
  double best = kInf;
  for (int a : src) {
    for (int b : dst) {
      best = std::min(best, edge_cost(topo, a, b, volume_bytes));
    }
  }
  return best;
}

double compute_cost(TaskKind kind, std::int64_t nm, std::int64_t mbs,
                    std::int64_t nl_j, double layer_flops_fwd, double comp_d,
                    int tp) {
  return comp_pass_factor(kind) * static_cast<double>(nm) *
         static_cast<double>(mbs) * static_cast<double>(nl_j) *
         layer_flops_fwd / (comp_d * tp);
}

double hbm_decode_cost(TaskKind kind, std::int64_t seq_out, std::int64_t nm,
                       std::int64_t mbs, int precision_bytes, std::int64_t nl_j,
                       std::int64_t h1, std::int64_t h2, double dbs,
                       double hbm_d, int tp) {
  if (kind != TaskKind::kGeneration) {
    throw InputError("hbm decode cost only applies to generation tasks");
  }
  const double weight_bytes =
      static_cast<double>(precision_bytes) * static_cast<double>(nl_j) *
      (4.0 * static_cast<double>(h1) * static_cast<double>(h1) +
       3.0 * static_cast<double>(h1) * static_cast<double>(h2));
  return static_cast<double>(seq_out) * static_cast<double>(nm) *
         static_cast<double>(mbs) * weight_bytes / (dbs * hbm_d * tp);
}

double bubble_cost(std::span<const double> stage_costs, std::int64_t nm) {
  double sum = 0.0;
  for (std::size_t j = 1; j < stage_costs.size(); ++j) {
    sum += stage_costs[j];
  }
  return sum / static_cast<double>(nm);
}

double aggregate_phi(std::span<const double> costs, double eta) {
  if (costs.empty()) {
    throw InputError("phi aggregation over an empty cost set");
  }
  double mx = -kInf;
  double sum = 0.0;
  for (double c : costs) {
    mx = std::max(mx, c);
    sum += c;
  }
  return mx + (1.0 - eta) * (sum - mx);
}

double bridge_transfer_cost(double bytes, std::span<const int> src,
                            std::span<const int> dst,
                            const DeviceTopology& topo) {
  return min_pair_cost(src, dst, bytes, topo);
}

TaskCostDetail task_cost_detail(const WorkflowGraph& wf,
                                const ResolvedTask& rt,
                                const DeviceTopology& topo,
                                const CostModelConfig& cfg,
                                std::span<const double> resident_weight_bytes) {
  const RlTask& task = *rt.task;
  const ParallelLayout& l = *rt.layout;
  const BatchConfig& batch = wf.batch;

  TaskCostDetail detail;
  detail.nm_replica = rt.nm_replica;
  detail.stage.assign(l.dp, std::vector<StagePiece>(l.pp));
  detail.bubble_replica.assign(l.dp, 0.0);

  const double cv_tp =
      tp_comm_volume(task.precision_bytes, batch.micro_batch_size,
                     batch.seq_in + batch.seq_out, task.model.hidden_size,
                     l.tp);
  const double cv_pp =
      pp_comm_volume(task.precision_bytes, batch.micro_batch_size,
                     batch.seq_in + batch.seq_out, task.model.hidden_size);
  const double tpf = tp_pass_factor(task.kind, cfg.recompute);
  const double ppf = pp_pass_factor(task.kind);
  const double flops =
      layer_flops(comp_seq(task.kind, batch), task.model.hidden_size,
                  task.model.intermediate_size);

  for (int i = 0; i < l.dp; ++i) {
    const std::int64_t nm = rt.nm_replica[i];
    for (int j = 0; j < l.pp; ++j) {
      StagePiece& piece = detail.stage[i][j];
      const std::int64_t nl_j = l.stage_layers[j];
      const std::span<const int> stage_devs(
          rt.devices.data() + l.flat(i, j, 0), static_cast<std::size_t>(l.tp));

      piece.tp = l.tp > 1 ? tpf * static_cast<double>(nm) *
                                static_cast<double>(nl_j) *
                                min_ring_bottleneck(stage_devs, cv_tp, topo)
                          : 0.0;

      for (int k = 0; k < l.tp; ++k) {
        const Device& dev = topo.device(stage_devs[static_cast<std::size_t>(k)]);
        piece.comp = std::max(
            piece.comp, compute_cost(task.kind, nm, batch.micro_batch_size,
                                     nl_j, flops, dev.comp(), l.tp));
        if (task.kind == TaskKind::kGeneration && batch.seq_out > 0) {
          double dbs = cfg.dbs_override;
          if (dbs <= 0) {
            const double kv_seq =
                kv_bytes_per_sequence(task, batch, l, j, cfg.memory);
            const double resident =
                resident_weight_bytes.empty()
                    ? weights_memory_bytes(task, l, j, cfg.memory)
                    : resident_weight_bytes[stage_devs[k]];
            const double free_bytes = dev.mem() - resident;
            dbs = std::floor(free_bytes / kv_seq);
            dbs = std::clamp(
                dbs, 1.0,
                static_cast<double>(nm * batch.micro_batch_size));
          }
          piece.hbm = std::max(
              piece.hbm,
              hbm_decode_cost(task.kind, batch.seq_out, nm,
                              batch.micro_batch_size, task.precision_bytes,
                              nl_j, task.model.hidden_size,
                              task.model.intermediate_size, dbs, dev.hbm(),
                              l.tp));
        }
      }

      if (j + 1 < l.pp) {
        const std::span<const int> next_devs(
            rt.devices.data() + l.flat(i, j + 1, 0),
            static_cast<std::size_t>(l.tp));
        piece.pp = ppf * static_cast<double>(nm) *
                   min_pair_cost(stage_devs, next_devs, cv_pp, topo);
      }
    }
    if (task.kind == TaskKind::kTraining && l.pp > 1) {
      std::vector<double> sums(l.pp);
      for (int j = 0; j < l.pp; ++j) {
        const StagePiece& p = detail.stage[i][j];
        sums[j] = p.comp + p.tp + p.pp;
      }
      detail.bubble_replica[i] = bubble_cost(sums, nm);
    }
  }

  TaskCost& agg = detail.agg;
  if (task.kind == TaskKind::kTraining && l.dp > 1) {
    std::vector<int> peers(l.dp);
    for (int j = 0; j < l.pp; ++j) {
      const double cv_dp = dp_comm_volume(
          task.precision_bytes, l.stage_layers[j], task.model.hidden_size,
          task.model.intermediate_size, l.dp, l.tp);
      for (int k = 0; k < l.tp; ++k) {
        for (int i = 0; i < l.dp; ++i) {
          peers[i] = rt.devices[l.flat(i, j, k)];
        }
        agg.dp = std::max(agg.dp, min_ring_bottleneck(peers, cv_dp, topo));
      }
    }
  }

  double total = 0.0;
  for (int i = 0; i < l.dp; ++i) {
    double stage_max = 0.0;
    for (int j = 0; j < l.pp; ++j) {
      const StagePiece& p = detail.stage[i][j];
      agg.comp = std::max(agg.comp, p.comp);
      agg.tp = std::max(agg.tp, p.tp);
      agg.pp = std::max(agg.pp, p.pp);
      agg.hbm = std::max(agg.hbm, p.hbm);
      stage_max = std::max(stage_max, p.sum());
    }
    agg.bubble = std::max(agg.bubble, detail.bubble_replica[i]);
    const double replica_total =
        task.kind == TaskKind::kTraining ? stage_max + detail.bubble_replica[i]
                                         : stage_max;
    total = std::max(total, replica_total);
  }
  if (task.kind == TaskKind::kTraining) {
    total += agg.dp;
  }
  agg.total = total;
  return detail;
}

TaskCost task_cost(const WorkflowGraph& wf, const ResolvedTask& rt,
                   const DeviceTopology& topo, const CostModelConfig& cfg) {
  return task_cost_detail(wf, rt, topo, cfg).agg;
}

double compose_end_to_end(const WorkflowGraph& wf,
                          const std::map<int, double>& task_totals,
                          double reshard_or_sync, double eta) {
  // Tasks of the same kind have no dependencies between them and aggregate
  // under phi; the kind stages chain. On full PPO/GRPO workflows this is
  // exactly C1 + phi(inferences) + phi(trainings) (+ reshard), resp. the
  // max(...) + sync form in async mode.
  std::vector<double> gens, infs, trains;
  for (const RlTask& t : wf.tasks) {
    auto it = task_totals.find(t.id);
    if (it == task_totals.end()) {
      throw InputError("missing task total for task " + std::to_string(t.id));
    }
    switch (t.kind) {
      case TaskKind::kGeneration: gens.push_back(it->second); break;
      case TaskKind::kInference: infs.push_back(it->second); break;
      case TaskKind::kTraining: trains.push_back(it->second); break;
    }
  }
  const double gen = gens.empty() ? 0.0 : aggregate_phi(gens, eta);
  const double inference = infs.empty() ? 0.0 : aggregate_phi(infs, eta);
  const double training = trains.empty() ? 0.0 : aggregate_phi(trains, eta);
  if (wf.mode == RunMode::kSync) {
    return gen + inference + training + reshard_or_sync;
  }
  return std::max(gen, inference + training) + reshard_or_sync;
}

CostBreakdown end_to_end_cost(const Plan& plan, const WorkflowGraph& wf,
                              const DeviceTopology& topo,
                              const CostModelConfig& cfg) {
  const ResolvedPlan rp = resolve_plan(plan, wf, topo);

  // weight residency per device, for decoding batch size derivation
  std::vector<double> resident(topo.size(), 0.0);
  for (const ResolvedTask& rt : rp.tasks) {
    const ParallelLayout& l = *rt.layout;
    for (int i = 0; i < l.dp; ++i) {
      for (int j = 0; j < l.pp; ++j) {
        for (int k = 0; k < l.tp; ++k) {
          resident[rt.devices[l.flat(i, j, k)]] +=
              weights_memory_bytes(*rt.task, l, j, cfg.memory);
        }
      }
    }
  }

  CostBreakdown bd;
  std::map<int, double> totals;
  const ResolvedTask* gen_task = nullptr;
  const ResolvedTask* actor_train = nullptr;
  for (const ResolvedTask& rt : rp.tasks) {
    TaskCostDetail detail = task_cost_detail(wf, rt, topo, cfg, resident);
    bd.per_task[rt.task_id] = detail.agg;
    totals[rt.task_id] = detail.agg.total;
    if (rt.task_id == 1) {
      gen_task = &rt;
    }
    if (rt.task_id == 6) {
      actor_train = &rt;
    }
  }

  double transfer = 0.0;
  const double override_v = wf.mode == RunMode::kSync ? cfg.reshard_override
                                                      : cfg.sync_override;
  if (override_v >= 0) {
    transfer = override_v;
  } else if (gen_task != nullptr && actor_train != nullptr) {
    const double bytes =
        static_cast<double>(gen_task->task->model.param_count()) *
        gen_task->task->precision_bytes;
    transfer =
        bridge_transfer_cost(bytes, gen_task->devices, actor_train->devices,
                             topo);
  }
  if (wf.mode == RunMode::kSync) {
    bd.reshard_s = transfer;
  } else {
    bd.sync_s = transfer;
  }
  bd.end_to_end_s = compose_end_to_end(wf, totals, transfer, wf.eta);
  bd.memory_feasible = check_memory(plan, topo, wf, cfg.memory).empty();
  return bd;
}

}  // namespace hetplan
