// SPDX-License-Identifier: Apache-2.0
#include "hetplan/plan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

#include "hetplan/errors.hpp"

namespace hetplan {

using json = nlohmann::json;

void TaskGrouping::validate(const WorkflowGraph& wf) const {
  if (groups.empty()) {
    throw InputError("task grouping must contain at least one group");
  }
  std::set<int> seen;
  for (const auto& g : groups) {
    if (g.empty()) {
      throw InputError("task groups must be non-empty");
    }
    for (int id : g) {
      if (!wf.has_task(id)) {
        throw InputError("task grouping references unknown task " +
                         std::to_string(id));
      }
      if (!seen.insert(id).second) {
        throw InputError("task " + std::to_string(id) +
                         " appears in more than one group");
      }
    }
  }
  if (seen.size() != wf.tasks.size()) {
    throw InputError("task grouping must cover every workflow task");
  }
}

int TaskGrouping::group_of(int task_id) const {
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (std::find(groups[g].begin(), groups[g].end(), task_id) !=
        groups[g].end()) {
      return static_cast<int>(g);
    }
  }
  return -1;
}

void ParallelLayout::validate(std::int64_t num_layers) const {
  if (dp < 1 || pp < 1 || tp < 1) {
    throw InputError("dp, pp and tp must be >= 1");
  }
  if (pp > num_layers) {
    throw InputError("pp exceeds layer count");
  }
  if (static_cast<int>(stage_layers.size()) != pp) {
    throw InputError("stage_layers must have one entry per pipeline stage");
  }
  std::int64_t total = 0;
  for (int l : stage_layers) {
    if (l < 1) {
      throw InputError("every pipeline stage needs at least one layer");
    }
    total += l;
  }
  if (total != num_layers) {
    throw InputError("stage_layers must sum to the model layer count");
  }
  if (static_cast<int>(replica_batch_weights.size()) != dp) {
    throw InputError("replica_batch_weights must have one entry per replica");
  }
  double wsum = 0;
  for (double w : replica_batch_weights) {
    if (!(w > 0)) {
      throw InputError("replica batch weights must be positive");
    }
    wsum += w;
  }
  if (std::abs(wsum - dp) > 1e-6 * dp) {
    throw InputError("replica batch weights must sum to dp");
  }
}

ParallelLayout make_layout(int dp, int pp, int tp, std::int64_t num_layers) {
  ParallelLayout l;
  l.dp = dp;
  l.pp = pp;
  l.tp = tp;
  l.stage_layers.assign(pp, static_cast<int>(num_layers / pp));
  for (int j = 0; j < static_cast<int>(num_layers % pp); ++j) {
    ++l.stage_layers[j];
  }
  l.replica_batch_weights.assign(dp, 1.0);
  return l;
}

bool Plan::operator==(const Plan& other) const {
  auto layout_eq = [](const ParallelLayout& a, const ParallelLayout& b) {
    return a.dp == b.dp && a.pp == b.pp && a.tp == b.tp &&
           a.stage_layers == b.stage_layers &&
           a.replica_batch_weights == b.replica_batch_weights;
  };
  if (task_grouping.groups != other.task_grouping.groups ||
      gpu_grouping.counts != other.gpu_grouping.counts ||
      assignment != other.assignment ||
      !(provenance == other.provenance) ||
      estimated_cost_s != other.estimated_cost_s ||
      layouts.size() != other.layouts.size()) {
    return false;
  }
  for (const auto& [id, l] : layouts) {
    auto it = other.layouts.find(id);
    if (it == other.layouts.end() || !layout_eq(l, it->second)) {
      return false;
    }
  }
  return true;
}

std::vector<TaskletCoord> expand_tasklets(
    const WorkflowGraph& wf, const TaskGrouping& grouping,
    const GpuGrouping& gpu_grouping,
    const std::map<int, ParallelLayout>& layouts) {
  grouping.validate(wf);
  if (gpu_grouping.counts.size() != grouping.groups.size()) {
    throw InputError("gpu grouping must list one count per task group");
  }
  std::vector<TaskletCoord> coords;
  for (std::size_t g = 0; g < grouping.groups.size(); ++g) {
    for (int task_id : grouping.groups[g]) {
      auto it = layouts.find(task_id);
      if (it == layouts.end()) {
        throw InputError("missing layout for task " + std::to_string(task_id));
      }
      const ParallelLayout& l = it->second;
      l.validate(wf.task(task_id).model.num_layers);
      if (l.size() != gpu_grouping.counts[g]) {
        throw InputError("layout of task " + std::to_string(task_id) +
                         " needs dp*pp*tp == its group's GPU count");
      }
      for (int i = 0; i < l.dp; ++i) {
        for (int j = 0; j < l.pp; ++j) {
          for (int k = 0; k < l.tp; ++k) {
            coords.push_back({task_id, i, j, k});
          }
        }
      }
    }
  }
  return coords;
}

namespace {

double params_on_device(const RlTask& task, const ParallelLayout& layout,
                        int stage) {
  double p = static_cast<double>(layout.stage_layers[stage]) *
             static_cast<double>(task.model.layer_params()) / layout.tp;
  if (task.model.include_embedding) {
    const double emb = static_cast<double>(task.model.vocab_size) *
                       static_cast<double>(task.model.hidden_size) / layout.tp;
    if (stage == 0) {
      p += emb;
    }
    if (stage == layout.pp - 1) {
      p += emb;
    }
  }
  return p;
}

}  // namespace

double kv_bytes_per_sequence(const RlTask& task, const BatchConfig& batch,
                             const ParallelLayout& layout, int stage,
                             const MemoryModel& mm) {
  return static_cast<double>(batch.seq_in + batch.seq_out) * 2.0 *
         static_cast<double>(task.model.hidden_size) *
         static_cast<double>(layout.stage_layers[stage]) *
         mm.kv_bytes_per_elem / layout.tp;
}

double model_memory_bytes(const RlTask& task, const BatchConfig& batch,
                          const ParallelLayout& layout, int stage,
                          const MemoryModel& mm) {
  const double params = params_on_device(task, layout, stage);
  switch (task.kind) {
    case TaskKind::kTraining:
      return params * mm.train_bytes_per_param;
    case TaskKind::kInference:
      return params * mm.infer_bytes_per_param;
    case TaskKind::kGeneration:
      return params * mm.infer_bytes_per_param +
             static_cast<double>(batch.micro_batch_size) * mm.dbs_cap *
                 kv_bytes_per_sequence(task, batch, layout, stage, mm);
  }
  return 0;
}

double weights_memory_bytes(const RlTask& task, const ParallelLayout& layout,
                            int stage, const MemoryModel& mm) {
  const double params = params_on_device(task, layout, stage);
  return task.kind == TaskKind::kTraining ? params * mm.train_bytes_per_param
                                          : params * mm.infer_bytes_per_param;
}

double working_memory_bytes(const RlTask& task, const BatchConfig& batch,
                            const ParallelLayout& layout, int stage,
                            const MemoryModel& mm) {
  return static_cast<double>(batch.micro_batch_size) *
         static_cast<double>(batch.seq_in + batch.seq_out) *
         static_cast<double>(task.model.hidden_size) *
         static_cast<double>(layout.stage_layers[stage]) * 2.0 *
         mm.act_factor / layout.tp;
}

std::vector<std::int64_t> apportion_microbatches(
    std::int64_t nm_base, const std::vector<double>& weights) {
  const int dp = static_cast<int>(weights.size());
  const std::int64_t total = nm_base * dp;
  double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::int64_t> out(dp, 0);
  std::vector<std::pair<double, int>> rema(dp);
  std::int64_t assigned = 0;
  for (int i = 0; i < dp; ++i) {
    const double quota = static_cast<double>(total) * weights[i] / wsum;
    out[i] = static_cast<std::int64_t>(std::floor(quota));
    rema[i] = {quota - static_cast<double>(out[i]), i};
    assigned += out[i];
  }
  std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) {
      return a.first > b.first;
    }
    return a.second < b.second;
  });
  for (int r = 0; assigned < total; ++assigned, ++r) {
    ++out[rema[r % dp].second];
  }
  // every replica processes at least one micro-batch
  for (int i = 0; i < dp; ++i) {
    while (out[i] == 0) {
      int donor = static_cast<int>(
          std::max_element(out.begin(), out.end()) - out.begin());
      --out[donor];
      ++out[i];
    }
  }
  return out;
}

ResolvedPlan resolve_plan(const Plan& plan, const WorkflowGraph& wf,
                          const DeviceTopology& topo) {
  plan.task_grouping.validate(wf);
  const auto& groups = plan.task_grouping.groups;
  const auto& counts = plan.gpu_grouping.counts;
  if (counts.size() != groups.size()) {
    throw InputError("gpu_counts must list one entry per task group");
  }
  std::int64_t count_sum = 0;
  for (int c : counts) {
    if (c < 1) {
      throw InputError("gpu_counts entries must be >= 1");
    }
    count_sum += c;
  }
  if (count_sum != topo.size()) {
    throw InputError("gpu_counts must sum to the device count (" +
                     std::to_string(topo.size()) + ")");
  }

  ResolvedPlan rp;
  rp.group_devices.resize(groups.size());
  std::vector<std::set<int>> group_sets(groups.size());

  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (int task_id : groups[g]) {
      const RlTask& task = wf.task(task_id);
      auto lit = plan.layouts.find(task_id);
      if (lit == plan.layouts.end()) {
        throw InputError("plan missing layout for task " +
                         std::to_string(task_id));
      }
      const ParallelLayout& layout = lit->second;
      layout.validate(task.model.num_layers);
      if (layout.size() != counts[g]) {
        throw InputError("task " + std::to_string(task_id) +
                         ": dp*pp*tp must equal its group's GPU count");
      }
      auto ait = plan.assignment.find(task_id);
      if (ait == plan.assignment.end()) {
        throw InputError("plan missing assignment for task " +
                         std::to_string(task_id));
      }
      if (static_cast<int>(ait->second.size()) != layout.size()) {
        throw InputError("task " + std::to_string(task_id) +
                         ": assignment must cover every tasklet");
      }
      ResolvedTask rt;
      rt.task_id = task_id;
      rt.task = &task;
      rt.layout = &layout;
      std::set<int> used;
      for (const std::string& dev_id : ait->second) {
        int d = topo.device_index(dev_id);
        if (!used.insert(d).second) {
          throw InputError("task " + std::to_string(task_id) +
                           ": device '" + dev_id +
                           "' hosts more than one tasklet");
        }
        rt.devices.push_back(d);
      }
      if (group_sets[g].empty()) {
        group_sets[g] = used;
        rp.group_devices[g].assign(used.begin(), used.end());
      } else if (group_sets[g] != used) {
        throw InputError("co-located tasks in group " + std::to_string(g) +
                         " must share the same device set");
      }
      rt.nm_base = derive_num_microbatches(wf.batch, layout.dp, task.kind);
      rt.nm_replica =
          apportion_microbatches(rt.nm_base, layout.replica_batch_weights);
      rp.tasks.push_back(std::move(rt));
    }
  }

  // groups own disjoint device sets
  std::set<int> all;
  for (const auto& gs : group_sets) {
    for (int d : gs) {
      if (!all.insert(d).second) {
        throw InputError("device '" + topo.device(d).id +
                         "' appears in more than one GPU group");
      }
    }
  }

  // resolved tasks in workflow order
  std::sort(rp.tasks.begin(), rp.tasks.end(),
            [](const ResolvedTask& a, const ResolvedTask& b) {
              return a.task_id < b.task_id;
            });
  return rp;
}

std::vector<MemoryViolation> check_memory(const Plan& plan,
                                          const DeviceTopology& topo,
                                          const WorkflowGraph& wf,
                                          const MemoryModel& mm) {
  ResolvedPlan rp = resolve_plan(plan, wf, topo);
  std::vector<double> model_sum(topo.size(), 0.0);
  std::vector<double> working_max(topo.size(), 0.0);
  for (const ResolvedTask& rt : rp.tasks) {
    const ParallelLayout& l = *rt.layout;
    for (int i = 0; i < l.dp; ++i) {
      for (int j = 0; j < l.pp; ++j) {
        for (int k = 0; k < l.tp; ++k) {
          const int d = rt.devices[l.flat(i, j, k)];
          model_sum[d] += model_memory_bytes(*rt.task, wf.batch, l, j, mm);
          working_max[d] = std::max(
              working_max[d],
              working_memory_bytes(*rt.task, wf.batch, l, j, mm));
        }
      }
    }
  }
  std::vector<MemoryViolation> violations;
  for (int d = 0; d < topo.size(); ++d) {
    const double required = model_sum[d] + working_max[d];
    if (required > topo.device(d).mem()) {
      violations.push_back({topo.device(d).id, required, topo.device(d).mem()});
    }
  }
  return violations;
}

// ---- serialization ----

namespace {

json layout_to_json(const ParallelLayout& l) {
  return {{"dp", l.dp},
          {"pp", l.pp},
          {"tp", l.tp},
          {"stage_layers", l.stage_layers},
          {"replica_batch_weights", l.replica_batch_weights}};
}

ParallelLayout layout_from_json(const json& j) {
  ParallelLayout l;
  l.dp = j.at("dp").get<int>();
  l.pp = j.at("pp").get<int>();
  l.tp = j.at("tp").get<int>();
  l.stage_layers = j.at("stage_layers").get<std::vector<int>>();
  if (j.contains("replica_batch_weights")) {
    l.replica_batch_weights =
        j.at("replica_batch_weights").get<std::vector<double>>();
  } else {
    l.replica_batch_weights.assign(l.dp, 1.0);
  }
  return l;
}

json breakdown_to_json(const CostBreakdown& bd) {
  json per_task = json::object();
  for (const auto& [id, tc] : bd.per_task) {
    per_task[std::to_string(id)] = {
        {"comp", tc.comp},     {"tp", tc.tp},   {"pp", tc.pp},
        {"dp", tc.dp},         {"bubble", tc.bubble}, {"hbm", tc.hbm},
        {"total", tc.total}};
  }
  return {{"per_task", per_task},
          {"reshard_s", bd.reshard_s},
          {"sync_s", bd.sync_s},
          {"end_to_end_s", bd.end_to_end_s},
          {"memory_feasible", bd.memory_feasible}};
}

CostBreakdown breakdown_from_json(const json& j) {
  CostBreakdown bd;
  for (const auto& [key, jt] : j.at("per_task").items()) {
    TaskCost tc;
    tc.comp = jt.at("comp").get<double>();
    tc.tp = jt.at("tp").get<double>();
    tc.pp = jt.at("pp").get<double>();
    tc.dp = jt.at("dp").get<double>();
    tc.bubble = jt.at("bubble").get<double>();
    tc.hbm = jt.at("hbm").get<double>();
    tc.total = jt.at("total").get<double>();
    bd.per_task[std::stoi(key)] = tc;
  }
  bd.reshard_s = j.at("reshard_s").get<double>();
  bd.sync_s = j.at("sync_s").get<double>();
  bd.end_to_end_s = j.at("end_to_end_s").get<double>();
  bd.memory_feasible = j.at("memory_feasible").get<bool>();
  return bd;
}

}  // namespace

bool CostBreakdown::operator==(const CostBreakdown& o) const {
  auto tc_eq = [](const TaskCost& a, const TaskCost& b) {
    return a.comp == b.comp && a.tp == b.tp && a.pp == b.pp && a.dp == b.dp &&
           a.bubble == b.bubble && a.hbm == b.hbm && a.total == b.total;
  };
  if (reshard_s != o.reshard_s || sync_s != o.sync_s ||
      end_to_end_s != o.end_to_end_s || memory_feasible != o.memory_feasible ||
      per_task.size() != o.per_task.size()) {
    return false;
  }
  for (const auto& [id, tc] : per_task) {
    auto it = o.per_task.find(id);
    if (it == o.per_task.end() || !tc_eq(tc, it->second)) {
      return false;
    }
  }
  return true;
}

std::string serialize_plan(const Plan& plan, const CostBreakdown* breakdown) {
  json jlayouts = json::object();
  for (const auto& [id, l] : plan.layouts) {
    jlayouts[std::to_string(id)] = layout_to_json(l);
  }
  json jassign = json::object();
  for (const auto& [id, devs] : plan.assignment) {
    auto lit = plan.layouts.find(id);
    if (lit == plan.layouts.end()) {
      throw InputError("plan has assignment for task without layout");
    }
    const ParallelLayout& l = lit->second;
    for (int i = 0; i < l.dp; ++i) {
      for (int j = 0; j < l.pp; ++j) {
        for (int k = 0; k < l.tp; ++k) {
          std::ostringstream key;
          key << id << ',' << i << ',' << j << ',' << k;
          jassign[key.str()] = devs.at(l.flat(i, j, k));
        }
      }
    }
  }
  json j = {{"task_groups", plan.task_grouping.groups},
            {"gpu_counts", plan.gpu_grouping.counts},
            {"layouts", jlayouts},
            {"assignment", jassign},
            {"provenance",
             {{"seed", plan.provenance.seed},
              {"budget", plan.provenance.budget}}},
            {"estimated_cost_s", plan.estimated_cost_s}};
  if (breakdown != nullptr) {
    j["cost_breakdown"] = breakdown_to_json(*breakdown);
  }
  return j.dump(2) + "\n";
}

void save_plan(const Plan& plan, const CostBreakdown* breakdown,
               const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw InputError("cannot write plan file: " + path);
  }
  out << serialize_plan(plan, breakdown);
}

ParsedPlan parse_plan_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("plan JSON parse error: ") + e.what());
  }
  try {
    ParsedPlan pp;
    Plan& plan = pp.plan;
    plan.task_grouping.groups =
        j.at("task_groups").get<std::vector<std::vector<int>>>();
    plan.gpu_grouping.counts = j.at("gpu_counts").get<std::vector<int>>();
    for (const auto& [key, jl] : j.at("layouts").items()) {
      plan.layouts[std::stoi(key)] = layout_from_json(jl);
    }
    const json& ja = j.at("assignment");
    for (const auto& [id, l] : plan.layouts) {
      std::vector<std::string> devs(l.size());
      for (int i = 0; i < l.dp; ++i) {
        for (int j2 = 0; j2 < l.pp; ++j2) {
          for (int k = 0; k < l.tp; ++k) {
            std::ostringstream key;
            key << id << ',' << i << ',' << j2 << ',' << k;
            if (!ja.contains(key.str())) {
              throw InputError("plan assignment missing tasklet " + key.str());
            }
            devs[l.flat(i, j2, k)] = ja.at(key.str()).get<std::string>();
          }
        }
      }
      plan.assignment[id] = std::move(devs);
    }
    if (j.contains("provenance")) {
      plan.provenance.seed = j.at("provenance").at("seed").get<std::uint64_t>();
      plan.provenance.budget =
          j.at("provenance").at("budget").get<std::int64_t>();
    }
    plan.estimated_cost_s = j.value("estimated_cost_s", -1.0);
    if (j.contains("cost_breakdown")) {
      pp.breakdown = breakdown_from_json(j.at("cost_breakdown"));
    }
    return pp;
  } catch (const json::exception& e) {
    throw InputError(std::string("plan JSON schema error: ") + e.what());
  }
}

ParsedPlan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot open plan file: " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_plan_json(ss.str());
}

}  // namespace hetplan
