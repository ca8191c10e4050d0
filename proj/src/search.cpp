// SPDX-License-Identifier: Apache-2.0
#include "hetplan/search.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "hetplan/balance.hpp"
#include "hetplan/combinatorics.hpp"
#include "hetplan/errors.hpp"

namespace hetplan {

using json = nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int ceil_log2(std::size_t n) {
  int r = 0;
  std::size_t v = 1;
  while (v < n) {
    v <<= 1;
    ++r;
  }
  return r;
}

}  // namespace

CostModelConfig SearchKnobs::cost_config() const {
  CostModelConfig cfg;
  cfg.recompute = recompute;
  cfg.reshard_override = reshard_override;
  cfg.sync_override = sync_override;
  return cfg;
}

SearchKnobs parse_knobs_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("knobs JSON parse error: ") + e.what());
  }
  SearchKnobs k;
  try {
    k.budget = j.value("budget", k.budget);
    k.seed = j.value("seed", k.seed);
    k.seed_set = j.contains("seed");
    k.population = j.value("population", k.population);
    k.locality_bias = j.value("locality_bias", k.locality_bias);
    k.quantize_gpu_counts = j.value("quantize_gpu_counts", k.quantize_gpu_counts);
    k.level1_filter = j.value("level1_filter", k.level1_filter);
    k.level1_cap = j.value("level1_cap", k.level1_cap);
    k.gg_arm_cap = j.value("gg_arm_cap", k.gg_arm_cap);
    k.swap_pair_sample = j.value("swap_pair_sample", k.swap_pair_sample);
    k.balance_data = j.value("balance_data", k.balance_data);
    k.balance_layers = j.value("balance_layers", k.balance_layers);
    k.balance_seqlen = j.value("balance_seqlen", k.balance_seqlen);
    k.recompute = j.value("recompute", k.recompute);
    k.reshard_override = j.value("reshard_override", k.reshard_override);
    k.sync_override = j.value("sync_override", k.sync_override);
    k.exhaustive_cap = j.value("exhaustive_cap", k.exhaustive_cap);
  } catch (const json::exception& e) {
    throw InputError(std::string("knobs JSON schema error: ") + e.what());
  }
  if (k.population < 1 || k.swap_pair_sample < 0 || k.gg_arm_cap < 1) {
    throw InputError("knobs: population and gg_arm_cap must be >= 1");
  }
  if (k.locality_bias < 0 || k.locality_bias > 1) {
    throw InputError("knobs: locality_bias must be within [0, 1]");
  }
  if (k.level1_filter != "off" && k.level1_filter != "adjacent") {
    throw InputError("knobs: level1_filter must be \"off\" or \"adjacent\"");
  }
  return k;
}

SearchKnobs load_knobs(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot open knobs file: " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_knobs_json(ss.str());
}

std::vector<TaskGrouping> enumerate_task_groupings(
    const WorkflowGraph& wf,
    const std::function<bool(const TaskGrouping&)>& filter) {
  std::vector<int> ids;
  for (const RlTask& t : wf.tasks) {
    ids.push_back(t.id);
  }
  std::vector<TaskGrouping> out;
  for (auto& partition : set_partitions(ids)) {
    TaskGrouping tg;
    tg.groups = std::move(partition);
    if (!filter || filter(tg)) {
      out.push_back(std::move(tg));
    }
  }
  return out;
}

std::vector<GpuGrouping> enumerate_gpu_groupings(int total_gpus,
                                                 int num_groups, int quantum) {
  if (num_groups > total_gpus) {
    throw InputError("more GPU groups than GPUs");
  }
  std::vector<GpuGrouping> out;
  for (auto& comp : compositions(total_gpus, num_groups, quantum)) {
    out.push_back(GpuGrouping{std::move(comp)});
  }
  return out;
}

std::vector<ParallelLayout> enumerate_layouts(int group_size,
                                              const ModelSpec& model,
                                              const BatchConfig& batch,
                                              int max_tp_per_node) {
  (void)batch;  // dp is not capped by the batch: short replicas pad
  std::vector<ParallelLayout> out;
  for (int dp = 1; dp <= group_size; ++dp) {
    if (group_size % dp != 0) {
      continue;
    }
    const int rest = group_size / dp;
    for (int pp = 1; pp <= rest; ++pp) {
      if (rest % pp != 0) {
        continue;
      }
      const int tp = rest / pp;
      if (pp > model.num_layers || tp > max_tp_per_node) {
        continue;
      }
      out.push_back(make_layout(dp, pp, tp, model.num_layers));
    }
  }
  return out;
}

std::vector<std::vector<std::string>> random_medium_assignment(
    const GpuGrouping& gg, const DeviceTopology& topo, double locality_bias,
    Rng& rng) {
  int total = 0;
  for (int c : gg.counts) {
    total += c;
  }
  if (total != topo.size()) {
    throw InputError("GPU grouping counts must sum to the device count");
  }
  // locality order: shuffled regions, shuffled nodes inside, index order inside
  std::map<std::string, std::map<std::string, std::vector<int>>> by_region;
  for (int i = 0; i < topo.size(); ++i) {
    const Device& d = topo.device(i);
    by_region[d.region][d.node].push_back(i);
  }
  std::vector<int> flat;
  flat.reserve(topo.size());
  std::vector<std::string> regions;
  for (const auto& [r, _] : by_region) {
    regions.push_back(r);
  }
  rng.shuffle(regions);
  for (const std::string& r : regions) {
    std::vector<std::string> nodes;
    for (const auto& [n, _] : by_region[r]) {
      nodes.push_back(n);
    }
    rng.shuffle(nodes);
    for (const std::string& n : nodes) {
      for (int d : by_region[r][n]) {
        flat.push_back(d);
      }
    }
  }
  // partial Fisher-Yates: bias 1 keeps locality blocks, bias 0 is uniform
  for (std::size_t i = flat.size(); i > 1; --i) {
    const bool scramble = rng.uniform() < (1.0 - locality_bias);
    const std::uint64_t pick = rng.bounded(i);
    if (scramble) {
      std::swap(flat[i - 1], flat[pick]);
    }
  }
  std::vector<std::vector<std::string>> groups;
  std::size_t cursor = 0;
  for (int c : gg.counts) {
    std::vector<std::string> ids;
    for (int k = 0; k < c; ++k) {
      ids.push_back(topo.device(flat[cursor++]).id);
    }
    groups.push_back(std::move(ids));
  }
  return groups;
}

std::vector<std::string> random_fine_assignment(
    const std::vector<std::string>& group_devices, const ParallelLayout& layout,
    const DeviceTopology& topo, Rng& rng) {
  if (static_cast<int>(group_devices.size()) != layout.size()) {
    throw InputError("fine assignment needs exactly dp*pp*tp devices");
  }
  // node blocks in random order, devices shuffled within a block; tensor
  // shards then take consecutive entries, landing on one node when they can
  std::map<std::string, std::vector<std::string>> by_node;
  for (const std::string& id : group_devices) {
    by_node[topo.device(topo.device_index(id)).node].push_back(id);
  }
  std::vector<std::string> nodes;
  for (const auto& [n, _] : by_node) {
    nodes.push_back(n);
  }
  rng.shuffle(nodes);
  std::vector<std::string> ordered;
  ordered.reserve(group_devices.size());
  for (const std::string& n : nodes) {
    auto& devs = by_node[n];
    rng.shuffle(devs);
    for (auto& d : devs) {
      ordered.push_back(std::move(d));
    }
  }
  return ordered;  // flat index == ParallelLayout::flat(i, j, k) traversal
}

// ---- candidate evaluation with budget accounting ----

namespace {

struct EvalContext {
  const WorkflowGraph& wf;
  const DeviceTopology& topo;
  const SearchKnobs& knobs;
  CostModelConfig cfg;
  std::int64_t budget = 0;
  std::int64_t consumed = 0;
  double incumbent_cost = kInf;
  std::optional<Plan> incumbent;
  CostBreakdown incumbent_bd;
  std::vector<std::pair<std::int64_t, double>> trace;

  EvalContext(const WorkflowGraph& w, const DeviceTopology& t,
              const SearchKnobs& k, std::int64_t b)
      : wf(w), topo(t), knobs(k), cfg(k.cost_config()), budget(b) {}

  bool exhausted() const { return consumed >= budget; }

  // Balances the candidate in place, scores it, and accounts one budget unit.
  double evaluate(Plan& plan, CostBreakdown* bd_out) {
    if (knobs.balance_data) {
      plan = balance_data(plan, wf, topo, cfg);
    }
    if (knobs.balance_layers) {
      plan = balance_layers(plan, wf, topo, cfg);
    }
    CostBreakdown bd = end_to_end_cost(plan, wf, topo, cfg);
    ++consumed;
    const double cost = bd.end_to_end_s;
    if (cost < incumbent_cost) {
      incumbent_cost = cost;
      incumbent = plan;
      incumbent_bd = bd;
      trace.emplace_back(consumed, cost);
    }
    if (bd_out != nullptr) {
      *bd_out = std::move(bd);
    }
    return cost;
  }
};

// Layout options per task of one (task grouping, GPU grouping) arm.
struct ArmLayouts {
  std::vector<int> task_order;
  std::map<int, std::vector<ParallelLayout>> options;
  bool feasible = true;
};

ArmLayouts build_arm_layouts(const TaskGrouping& tg, const GpuGrouping& gg,
                             const WorkflowGraph& wf,
                             const DeviceTopology& topo) {
  ArmLayouts al;
  for (std::size_t g = 0; g < tg.groups.size(); ++g) {
    for (int task_id : tg.groups[g]) {
      auto opts = enumerate_layouts(gg.counts[g], wf.task(task_id).model,
                                    wf.batch, topo.max_devices_per_node());
      if (opts.empty()) {
        al.feasible = false;
      }
      al.task_order.push_back(task_id);
      al.options[task_id] = std::move(opts);
    }
  }
  return al;
}

std::map<int, ParallelLayout> decode_layout_combo(const ArmLayouts& al,
                                                  std::int64_t combo) {
  std::map<int, ParallelLayout> chosen;
  for (int task_id : al.task_order) {
    const auto& opts = al.options.at(task_id);
    chosen[task_id] = opts[static_cast<std::size_t>(combo % opts.size())];
    combo /= static_cast<std::int64_t>(opts.size());
  }
  return chosen;
}

Plan make_candidate(const TaskGrouping& tg, const GpuGrouping& gg,
                    const std::map<int, ParallelLayout>& layouts,
                    const DeviceTopology& topo, double locality_bias,
                    Rng& rng) {
  Plan plan;
  plan.task_grouping = tg;
  plan.gpu_grouping = gg;
  plan.layouts = layouts;
  const auto medium = random_medium_assignment(gg, topo, locality_bias, rng);
  for (std::size_t g = 0; g < tg.groups.size(); ++g) {
    for (int task_id : tg.groups[g]) {
      plan.assignment[task_id] =
          random_fine_assignment(medium[g], layouts.at(task_id), topo, rng);
    }
  }
  return plan;
}

std::vector<std::string> group_device_set(const Plan& plan, std::size_t g) {
  const int first_task = plan.task_grouping.groups[g].front();
  std::vector<std::string> devs = plan.assignment.at(first_task);
  std::sort(devs.begin(), devs.end());
  return devs;
}

// Level-3 move: two devices trade places across task groups (every task in
// each group follows).
void swap_across_groups(Plan& plan, std::size_t g1, std::size_t g2,
                        const std::string& a, const std::string& b) {
  for (int task_id : plan.task_grouping.groups[g1]) {
    auto& devs = plan.assignment.at(task_id);
    *std::find(devs.begin(), devs.end(), a) = b;
  }
  for (int task_id : plan.task_grouping.groups[g2]) {
    auto& devs = plan.assignment.at(task_id);
    *std::find(devs.begin(), devs.end(), b) = a;
  }
}

// Level-5 move: two tasklet slots of one task trade devices.
void swap_within_task(Plan& plan, int task_id, std::size_t p1,
                      std::size_t p2) {
  auto& devs = plan.assignment.at(task_id);
  std::swap(devs[p1], devs[p2]);
}

// Applies one random move; returns false when no move of that level exists.
bool random_move(Plan& plan, int level, Rng& rng) {
  if (level == 3) {
    const std::size_t ng = plan.task_grouping.groups.size();
    if (ng < 2) {
      return false;
    }
    std::size_t g1 = rng.bounded(ng);
    std::size_t g2 = rng.bounded(ng - 1);
    if (g2 >= g1) {
      ++g2;
    }
    const auto d1 = group_device_set(plan, g1);
    const auto d2 = group_device_set(plan, g2);
    swap_across_groups(plan, g1, g2, d1[rng.bounded(d1.size())],
                       d2[rng.bounded(d2.size())]);
    return true;
  }
  // level 5
  std::vector<int> eligible;
  for (const auto& [task_id, devs] : plan.assignment) {
    if (devs.size() >= 2) {
      eligible.push_back(task_id);
    }
  }
  if (eligible.empty()) {
    return false;
  }
  const int task_id = eligible[rng.bounded(eligible.size())];
  const std::size_t n = plan.assignment.at(task_id).size();
  std::size_t p1 = rng.bounded(n);
  std::size_t p2 = rng.bounded(n - 1);
  if (p2 >= p1) {
    ++p2;
  }
  swap_within_task(plan, task_id, p1, p2);
  return true;
}

bool mutate(Plan& plan, Rng& rng) {
  const bool has_l3 = plan.task_grouping.groups.size() >= 2;
  bool has_l5 = false;
  for (const auto& [_, devs] : plan.assignment) {
    if (devs.size() >= 2) {
      has_l5 = true;
    }
  }
  if (!has_l3 && !has_l5) {
    return false;
  }
  int level;
  if (has_l3 && has_l5) {
    level = rng.bounded(2) == 0 ? 3 : 5;
  } else {
    level = has_l3 ? 3 : 5;
  }
  return random_move(plan, level, rng);
}

struct GaMember {
  Plan plan;
  double cost = kInf;
  std::uint64_t seq = 0;
};

struct GaLocalBest {
  std::optional<Plan> plan;
  CostBreakdown bd;
  double cost = kInf;
};

// Runs the genetic search for one arm, spending up to `slice` evaluations
// from the shared context. Updates the arm record as it goes.
GaLocalBest ga_run(EvalContext& ctx, const TaskGrouping& tg,
                   const GpuGrouping& gg, Rng rng, std::int64_t slice,
                   ArmRecord& rec) {
  GaLocalBest best;
  slice = std::min(slice, ctx.budget - ctx.consumed);
  if (slice <= 0) {
    return best;
  }
  const ArmLayouts layouts = build_arm_layouts(tg, gg, ctx.wf, ctx.topo);
  if (!layouts.feasible) {
    return best;  // no layout fits this grouping: infinite-cost arm
  }

  std::int64_t used = 0;
  auto score = [&](Plan& plan, CostBreakdown* bd) {
    const double c = ctx.evaluate(plan, bd);
    ++used;
    ++rec.evals;
    rec.best_cost = std::min(rec.best_cost, c);
    return c;
  };
  auto memory_ok = [&](const Plan& plan) {
    return check_memory(plan, ctx.topo, ctx.wf, ctx.cfg.memory).empty();
  };

  std::vector<GaMember> population;
  std::uint64_t seq = 0;
  auto insert_member = [&](Plan plan, double cost, const CostBreakdown& bd) {
    if (cost < best.cost) {
      best.cost = cost;
      best.plan = plan;
      best.bd = bd;
    }
    GaMember m{std::move(plan), cost, seq++};
    auto pos = std::upper_bound(
        population.begin(), population.end(), m, [](const auto& a, const auto& b) {
          return a.cost != b.cost ? a.cost < b.cost : a.seq < b.seq;
        });
    population.insert(pos, std::move(m));
    if (static_cast<int>(population.size()) > ctx.knobs.population) {
      population.pop_back();
    }
  };

  // init: cycle layout combinations, random medium + fine assignments
  const std::int64_t init_target =
      std::max<std::int64_t>(1, std::min({slice, static_cast<std::int64_t>(
                                                     ctx.knobs.population),
                                          slice / 2}));
  std::int64_t attempts = 0;
  const std::int64_t attempt_cap = 64 + 16 * init_target;
  std::int64_t combo = 0;
  while (static_cast<std::int64_t>(population.size()) < init_target &&
         used < slice && attempts < attempt_cap) {
    ++attempts;
    auto chosen = decode_layout_combo(layouts, combo++);
    Plan plan = make_candidate(tg, gg, chosen, ctx.topo,
                               ctx.knobs.locality_bias, rng);
    if (!memory_ok(plan)) {
      continue;
    }
    CostBreakdown bd;
    const double c = score(plan, &bd);
    insert_member(std::move(plan), c, bd);
  }
  if (population.empty()) {
    return best;  // nothing feasible within the attempt cap
  }

  // offspring generations
  std::int64_t infeasible_streak = 0;
  while (used < slice && infeasible_streak < 64) {
    Plan child = population[rng.bounded(population.size())].plan;
    bool mutated = false;
    for (int tries = 0; tries < 8; ++tries) {
      Plan trial = child;
      if (!mutate(trial, rng)) {
        break;
      }
      if (memory_ok(trial)) {
        child = std::move(trial);
        mutated = true;
        break;
      }
    }
    if (!mutated) {
      // accept the unmutated parent re-draw only if moves exist; otherwise
      // the space is a single point and re-evaluation is the only spend
      if (!memory_ok(child)) {
        ++infeasible_streak;
        continue;
      }
    }
    infeasible_streak = 0;
    CostBreakdown bd;
    double cost = score(child, &bd);
    // improving swaps, first improvement per level
    for (int level : {3, 5}) {
      if (used >= slice) {
        break;
      }
      for (int trial = 0; trial < ctx.knobs.swap_pair_sample; ++trial) {
        if (used >= slice) {
          break;
        }
        Plan cand = child;
        if (!random_move(cand, level, rng)) {
          break;
        }
        if (!memory_ok(cand)) {
          continue;
        }
        CostBreakdown cand_bd;
        const double c2 = score(cand, &cand_bd);
        if (c2 < cost) {
          child = std::move(cand);
          cost = c2;
          bd = std::move(cand_bd);
          break;
        }
      }
    }
    if (static_cast<int>(population.size()) < ctx.knobs.population ||
        cost < population.back().cost) {
      insert_member(std::move(child), cost, bd);
    }
  }
  return best;
}

}  // namespace

GaResult ga_search(const TaskGrouping& tg, const GpuGrouping& gg,
                   const WorkflowGraph& wf, const DeviceTopology& topo,
                   std::int64_t budget_slice, Rng rng,
                   const SearchKnobs& knobs) {
  if (budget_slice < 1) {
    throw UsageError("ga_search needs a budget of at least 1 evaluation");
  }
  EvalContext ctx(wf, topo, knobs, budget_slice);
  ArmRecord rec;
  GaLocalBest best = ga_run(ctx, tg, gg, rng, budget_slice, rec);
  GaResult out;
  out.plan = best.plan;
  out.breakdown = best.bd;
  out.cost = best.cost;
  out.evals = ctx.consumed;
  return out;
}

namespace {

// Survivors: the best ceil(n/2) arms by (score, index).
template <typename ScoreFn>
std::vector<std::size_t> best_half(const std::vector<std::size_t>& arms,
                                   ScoreFn score, int level,
                                   std::vector<HalvingEvent>* events) {
  if (arms.size() <= 1) {
    return arms;
  }
  std::vector<std::size_t> order = arms;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     const double sa = score(a), sb = score(b);
                     if (sa != sb) {
                       return sa < sb;
                     }
                     return a < b;
                   });
  const std::size_t keep = (order.size() + 1) / 2;
  std::vector<std::size_t> survivors(order.begin(), order.begin() + keep);
  if (events != nullptr) {
    HalvingEvent ev;
    ev.level = level;
    ev.before = order.size();
    ev.after = keep;
    ev.survivor_worst = score(survivors.back());
    ev.eliminated_best = score(order[keep]);
    events->push_back(ev);
  }
  // keep deterministic arm order
  std::sort(survivors.begin(), survivors.end());
  return survivors;
}

}  // namespace

SearchResult nested_sha_search(const WorkflowGraph& wf,
                               const DeviceTopology& topo,
                               const SearchKnobs& knobs,
                               const std::vector<TaskGrouping>* tg_override) {
  if (knobs.budget < 1) {
    throw UsageError("search budget must be >= 1");
  }
  const Rng base_rng(knobs.seed);
  EvalContext ctx(wf, topo, knobs, knobs.budget);

  // Level-1 arms
  std::function<bool(const TaskGrouping&)> filter;
  if (knobs.level1_filter == "adjacent") {
    filter = [&wf](const TaskGrouping& tg) {
      for (const auto& group : tg.groups) {
        if (group.size() < 2) {
          continue;
        }
        bool adjacent = false;
        for (int a : group) {
          for (int b : group) {
            if (wf.dep_edges.count({a, b}) != 0) {
              adjacent = true;
            }
          }
        }
        if (!adjacent) {
          return false;
        }
      }
      return true;
    };
  }
  std::vector<TaskGrouping> tgs =
      tg_override != nullptr ? *tg_override : enumerate_task_groupings(wf, filter);
  if (knobs.level1_cap > 0 &&
      tgs.size() > static_cast<std::size_t>(knobs.level1_cap)) {
    tgs.resize(knobs.level1_cap);
  }
  for (const TaskGrouping& tg : tgs) {
    tg.validate(wf);
  }

  // Level-2 arms per task grouping: full enumeration when small, seeded
  // sample (always including the near-balanced split) when large.
  const int n_devices = topo.size();
  struct TgArm {
    TaskGrouping tg;
    std::vector<GpuGrouping> ggs;
    std::vector<double> best;        // per gg arm
    std::vector<std::size_t> alive;  // surviving gg indices
    std::vector<std::size_t> rec;    // index into state.arms
  };
  std::vector<TgArm> tg_arms;
  SearchState state;
  state.budget = knobs.budget;
  state.seed = knobs.seed;
  state.task_groupings = tgs.size();

  for (std::size_t ti = 0; ti < tgs.size(); ++ti) {
    TgArm arm;
    arm.tg = tgs[ti];
    const int k = static_cast<int>(arm.tg.groups.size());
    if (k <= n_devices) {
      int q = knobs.quantize_gpu_counts;
      double count = composition_count(n_devices, k, q);
      if (count == 0) {
        q = 1;
        count = composition_count(n_devices, k, q);
      }
      if (count <= knobs.gg_arm_cap) {
        arm.ggs = enumerate_gpu_groupings(n_devices, k, q);
      } else {
        std::set<std::vector<int>> seen;
        std::vector<int> balanced(k, n_devices / k);
        for (int i = 0; i < n_devices % k; ++i) {
          ++balanced[i];
        }
        seen.insert(balanced);
        arm.ggs.push_back(GpuGrouping{balanced});
        Rng rng = base_rng.fork(0xA001 + ti);
        for (std::int64_t tries = 0;
             static_cast<int>(arm.ggs.size()) < knobs.gg_arm_cap &&
             tries < 50LL * knobs.gg_arm_cap;
             ++tries) {
          auto comp = sample_composition(n_devices, k, q, rng);
          if (seen.insert(comp).second) {
            arm.ggs.push_back(GpuGrouping{std::move(comp)});
          }
        }
      }
    }
    arm.best.assign(arm.ggs.size(), kInf);
    for (std::size_t gi = 0; gi < arm.ggs.size(); ++gi) {
      arm.alive.push_back(gi);
      arm.rec.push_back(state.arms.size());
      ArmRecord rec;
      rec.tg_index = ti;
      rec.gg_index = gi;
      state.arms.push_back(rec);
    }
    tg_arms.push_back(std::move(arm));
  }

  auto run_arm = [&](std::size_t ti, std::size_t gi, std::int64_t slice,
                     int m, int n) {
    if (ctx.exhausted() || slice < 1) {
      return;
    }
    TgArm& arm = tg_arms[ti];
    const std::uint64_t salt = (static_cast<std::uint64_t>(ti) << 40) |
                               (static_cast<std::uint64_t>(gi) << 16) |
                               (static_cast<std::uint64_t>(m) << 8) |
                               static_cast<std::uint64_t>(n);
    ArmRecord& rec = state.arms[arm.rec[gi]];
    ga_run(ctx, arm.tg, arm.ggs[gi], base_rng.fork(salt), slice, rec);
    arm.best[gi] = rec.best_cost;
  };

  // Inner SHA over GPU groupings for one task grouping and round budget b.
  auto run_tg_round = [&](std::size_t ti, std::int64_t b, int m) {
    TgArm& arm = tg_arms[ti];
    if (arm.alive.empty()) {
      return;
    }
    const std::vector<std::size_t> entry = arm.alive;
    const int denom_in = std::max(1, ceil_log2(entry.size()));
    std::vector<std::size_t> cur = entry;
    for (int n = 0; n < std::max(1, ceil_log2(entry.size())); ++n) {
      const std::int64_t b_mn =
          b / (static_cast<std::int64_t>(cur.size()) * denom_in);
      if (b_mn >= 1) {
        for (std::size_t gi : cur) {
          run_arm(ti, gi, b_mn, m, n);
        }
      } else {
        std::int64_t rb = b / denom_in;
        if (rb == 0 && n == 0) {
          rb = b;  // too few evaluations for halving rounds: round-robin once
        }
        std::int64_t spent = 0;
        for (std::size_t gi : cur) {
          if (spent >= rb || ctx.exhausted()) {
            break;
          }
          run_arm(ti, gi, 1, m, n);
          ++spent;
        }
      }
      cur = best_half(
          cur, [&](std::size_t gi) { return arm.best[gi]; }, 2,
          &state.halvings);
    }
    arm.alive = best_half(
        entry, [&](std::size_t gi) { return arm.best[gi]; }, 2,
        &state.halvings);
  };

  auto tg_score = [&](std::size_t ti) {
    double best = kInf;
    for (double c : tg_arms[ti].best) {
      best = std::min(best, c);
    }
    return best;
  };

  std::vector<std::size_t> surv;
  for (std::size_t ti = 0; ti < tgs.size(); ++ti) {
    surv.push_back(ti);
  }
  const int denom_out = std::max(1, ceil_log2(tgs.size()));
  const int rounds = std::max(1, ceil_log2(tgs.size()));
  for (int m = 0; m < rounds; ++m) {
    const std::int64_t b_m =
        knobs.budget / (static_cast<std::int64_t>(surv.size()) * denom_out);
    state.b_m.push_back(b_m);
    if (b_m >= 1) {
      for (std::size_t ti : surv) {
        run_tg_round(ti, b_m, m);
      }
    } else {
      std::int64_t ob = knobs.budget / denom_out;
      if (ob == 0 && m == 0) {
        ob = knobs.budget;  // budget below the round count: one round-robin
      }
      std::int64_t spent = 0;
      for (std::size_t ti : surv) {
        if (spent >= ob || ctx.exhausted()) {
          break;
        }
        run_tg_round(ti, 1, m);
        ++spent;
      }
    }
    surv = best_half(surv, tg_score, 1, &state.halvings);
  }

  state.consumed = ctx.consumed;
  state.trace = ctx.trace;

  SearchResult result;
  result.state = std::move(state);
  if (ctx.incumbent.has_value()) {
    Plan plan = *ctx.incumbent;
    plan.provenance.seed = knobs.seed;
    plan.provenance.budget = ctx.consumed;
    plan.estimated_cost_s = ctx.incumbent_bd.end_to_end_s;
    result.plan = std::move(plan);
    result.breakdown = ctx.incumbent_bd;
  }
  return result;
}

// ---- exhaustive oracle ----

namespace {

double factorial_d(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) {
    f *= i;
  }
  return f;
}

}  // namespace

double exhaustive_space_estimate(const WorkflowGraph& wf,
                                 const DeviceTopology& topo,
                                 const SearchKnobs& knobs) {
  const int n = topo.size();
  double total = 0.0;
  for (const TaskGrouping& tg : enumerate_task_groupings(wf)) {
    const int k = static_cast<int>(tg.groups.size());
    if (k > n) {
      continue;
    }
    for (const auto& comp : compositions(n, k)) {
      double medium_ways = factorial_d(n);
      for (int c : comp) {
        medium_ways /= factorial_d(c);
      }
      double per_plan = 1.0;
      for (int g = 0; g < k; ++g) {
        for (int task_id : tg.groups[g]) {
          const auto opts =
              enumerate_layouts(comp[g], wf.task(task_id).model, wf.batch,
                                topo.max_devices_per_node());
          per_plan *= std::max<std::size_t>(1, opts.size()) *
                      factorial_d(comp[g]);
        }
      }
      total += medium_ways * per_plan;
      if (total > knobs.exhaustive_cap * 1e3) {
        return total;  // far over budget already, stop counting
      }
    }
  }
  return total;
}

ExhaustiveResult exhaustive_search(const WorkflowGraph& wf,
                                   const DeviceTopology& topo,
                                   const SearchKnobs& knobs) {
  const double estimate = exhaustive_space_estimate(wf, topo, knobs);
  if (estimate > knobs.exhaustive_cap) {
    throw InputError("exhaustive search space estimate " +
                     std::to_string(estimate) + " exceeds cap " +
                     std::to_string(knobs.exhaustive_cap));
  }
  const int n = topo.size();
  const CostModelConfig cfg = knobs.cost_config();

  // symmetry classes: devices interchangeable when identical and co-resident
  std::vector<int> dev_class(n);
  std::map<std::string, int> class_ids;
  for (int i = 0; i < n; ++i) {
    const Device& d = topo.device(i);
    std::ostringstream key;
    key << d.gpu_model << '|' << d.comp_tflops << '|' << d.mem_gb << '|'
        << d.hbm_gbps << '|' << d.intra_node_gbps << '|' << d.node << '|'
        << d.region;
    dev_class[i] = static_cast<int>(
        class_ids.emplace(key.str(), class_ids.size()).first->second);
  }

  ExhaustiveResult result;
  std::set<std::vector<int>> seen;

  for (const TaskGrouping& tg : enumerate_task_groupings(wf)) {
    const int k = static_cast<int>(tg.groups.size());
    if (k > n) {
      continue;
    }
    std::vector<int> task_order;
    for (const auto& g : tg.groups) {
      for (int id : g) {
        task_order.push_back(id);
      }
    }
    for (const auto& comp : compositions(n, k)) {
      // layout options per task
      std::map<int, std::vector<ParallelLayout>> options;
      bool any_empty = false;
      for (int g = 0; g < k; ++g) {
        for (int task_id : tg.groups[g]) {
          options[task_id] =
              enumerate_layouts(comp[g], wf.task(task_id).model, wf.batch,
                                topo.max_devices_per_node());
          any_empty |= options[task_id].empty();
        }
      }
      if (any_empty) {
        continue;
      }
      // medium assignments: distinct group labelings of the device list
      std::vector<int> labels;
      for (int g = 0; g < k; ++g) {
        labels.insert(labels.end(), comp[g], g);
      }
      std::sort(labels.begin(), labels.end());
      do {
        std::vector<std::vector<int>> group_devs(k);
        for (int i = 0; i < n; ++i) {
          group_devs[labels[i]].push_back(i);
        }
        // recurse over tasks: layout option x device permutation
        Plan plan;
        plan.task_grouping = tg;
        plan.gpu_grouping.counts = comp;
        std::vector<std::vector<int>> perms(task_order.size());

        auto emit = [&]() {
          // canonical form under class-preserving device permutation
          std::vector<int> key;
          key.push_back(static_cast<int>(tg.groups.size()));
          for (const auto& g : tg.groups) {
            for (int id : g) {
              key.push_back(-id);
            }
            key.push_back(-1000);
          }
          std::map<int, int> canon;
          std::map<int, int> class_counter;
          for (std::size_t t = 0; t < task_order.size(); ++t) {
            const int task_id = task_order[t];
            const ParallelLayout& l = plan.layouts.at(task_id);
            key.push_back(l.dp);
            key.push_back(l.pp);
            key.push_back(l.tp);
            for (int sl : l.stage_layers) {
              key.push_back(sl);
            }
            for (int d : perms[t]) {
              auto it = canon.find(d);
              if (it == canon.end()) {
                const int cls = dev_class[d];
                it = canon.emplace(d, cls * 4096 + class_counter[cls]++).first;
              }
              key.push_back(it->second);
            }
          }
          if (!seen.insert(std::move(key)).second) {
            return;
          }
          ++result.explored;
          for (std::size_t t = 0; t < task_order.size(); ++t) {
            std::vector<std::string> ids;
            for (int d : perms[t]) {
              ids.push_back(topo.device(d).id);
            }
            plan.assignment[task_order[t]] = std::move(ids);
          }
          if (!check_memory(plan, topo, wf, cfg.memory).empty()) {
            return;
          }
          const CostBreakdown bd = end_to_end_cost(plan, wf, topo, cfg);
          if (bd.end_to_end_s < result.cost) {
            result.cost = bd.end_to_end_s;
            result.breakdown = bd;
            plan.estimated_cost_s = bd.end_to_end_s;
            result.plan = plan;
          }
        };

        auto rec = [&](auto&& self, std::size_t t) -> void {
          if (t == task_order.size()) {
            emit();
            return;
          }
          const int task_id = task_order[t];
          const int g = plan.task_grouping.group_of(task_id);
          for (const ParallelLayout& opt : options.at(task_id)) {
            plan.layouts[task_id] = opt;
            std::vector<int> perm = group_devs[g];
            std::sort(perm.begin(), perm.end());
            do {
              perms[t] = perm;
              self(self, t + 1);
            } while (std::next_permutation(perm.begin(), perm.end()));
          }
        };
        rec(rec, 0);
      } while (std::next_permutation(labels.begin(), labels.end()));
    }
  }
  return result;
}

}  // namespace hetplan

