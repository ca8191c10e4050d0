// SPDX-License-Identifier: Apache-2.0
#include "hetplan/workflow.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "hetplan/errors.hpp"

namespace hetplan {

using json = nlohmann::json;

void ModelSpec::validate() const {
  if (hidden_size < 1 || intermediate_size < 1 || num_layers < 1) {
    throw InputError("model spec requires hidden_size, intermediate_size and "
                     "num_layers >= 1");
  }
  if (include_embedding && vocab_size < 1) {
    throw InputError("include_embedding requires vocab_size >= 1");
  }
}

void BatchConfig::validate() const {
  if (global_batch < 1 || responses_per_prompt < 1 || micro_batch_size < 1) {
    throw InputError("batch sizes must be >= 1");
  }
  if (seq_in < 1 || seq_out < 0) {
    throw InputError("seq_in must be >= 1 and seq_out >= 0");
  }
}

const char* to_string(TaskKind k) {
  switch (k) {
    case TaskKind::kGeneration: return "generation";
    case TaskKind::kInference: return "inference";
    case TaskKind::kTraining: return "training";
  }
  return "?";
}

const char* to_string(RlAlgorithm a) {
  return a == RlAlgorithm::kPpo ? "ppo" : "grpo";
}

const char* to_string(RunMode m) { return m == RunMode::kSync ? "sync" : "async"; }

bool WorkflowGraph::has_task(int id) const {
  return std::any_of(tasks.begin(), tasks.end(),
                     [&](const RlTask& t) { return t.id == id; });
}

const RlTask& WorkflowGraph::task(int id) const {
  for (const RlTask& t : tasks) {
    if (t.id == id) {
      return t;
    }
  }
  throw InputError("unknown task id " + std::to_string(id));
}

std::vector<int> algorithm_task_ids(RlAlgorithm a) {
  if (a == RlAlgorithm::kPpo) {
    return {1, 2, 3, 4, 5, 6};
  }
  return {1, 2, 3, 6};
}

std::string task_model_name(int task_id) {
  switch (task_id) {
    case 1: return "actor";      // generation
    case 2: return "reward";     // reward inference
    case 3: return "reference";  // reference inference
    case 4: return "critic";     // critic inference
    case 5: return "critic";     // critic training
    case 6: return "actor";      // actor training
  }
  throw InputError("unknown task id " + std::to_string(task_id));
}

namespace {

TaskKind task_kind(int task_id) {
  if (task_id == 1) {
    return TaskKind::kGeneration;
  }
  if (task_id <= 4) {
    return TaskKind::kInference;
  }
  return TaskKind::kTraining;
}

}  // namespace

WorkflowGraph build_workflow(RlAlgorithm algorithm, RunMode mode,
                             const std::map<std::string, ModelSpec>& models,
                             const BatchConfig& batch, double eta) {
  if (eta < 0.0 || eta > 1.0) {
    throw InputError("eta must be within [0, 1]");
  }
  batch.validate();

  WorkflowGraph wf;
  wf.algorithm = algorithm;
  wf.mode = mode;
  wf.eta = eta;
  wf.batch = batch;

  for (int id : algorithm_task_ids(algorithm)) {
    const std::string name = task_model_name(id);
    auto it = models.find(name);
    if (it == models.end()) {
      throw InputError("missing model spec '" + name + "' required by task " +
                       std::to_string(id));
    }
    it->second.validate();
    RlTask t;
    t.id = id;
    t.kind = task_kind(id);
    t.model_name = name;
    t.model = it->second;
    wf.tasks.push_back(std::move(t));
  }

  // generation -> every inference -> every training task
  std::vector<int> inferences;
  std::vector<int> trainings;
  for (const RlTask& t : wf.tasks) {
    if (t.kind == TaskKind::kInference) {
      inferences.push_back(t.id);
    } else if (t.kind == TaskKind::kTraining) {
      trainings.push_back(t.id);
    }
  }
  for (int i : inferences) {
    wf.dep_edges.emplace(1, i);
  }
  for (int i : inferences) {
    for (int tr : trainings) {
      wf.dep_edges.emplace(i, tr);
    }
  }
  return wf;
}

std::int64_t derive_num_microbatches(const BatchConfig& batch,
                                     std::int64_t dp_degree, TaskKind kind) {
  (void)kind;  // generation counts responses as sequences, same arithmetic
  if (dp_degree < 1) {
    throw InputError("dp degree must be >= 1");
  }
  const std::int64_t samples = batch.total_sequences();
  const std::int64_t denom = dp_degree * batch.micro_batch_size;
  return (samples + denom - 1) / denom;
}

namespace {

ModelSpec model_from_json(const json& j) {
  ModelSpec m;
  m.hidden_size = j.at("hidden_size").get<std::int64_t>();
  m.intermediate_size = j.at("intermediate_size").get<std::int64_t>();
  m.num_layers = j.at("num_layers").get<std::int64_t>();
  if (j.contains("include_embedding")) {
    m.include_embedding = j.at("include_embedding").get<bool>();
  }
  if (j.contains("vocab_size")) {
    m.vocab_size = j.at("vocab_size").get<std::int64_t>();
  }
  return m;
}

}  // namespace

WorkflowGraph parse_workflow_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("workflow JSON parse error: ") + e.what());
  }
  try {
    const std::string algo_s = j.at("algorithm").get<std::string>();
    RlAlgorithm algo;
    if (algo_s == "ppo") {
      algo = RlAlgorithm::kPpo;
    } else if (algo_s == "grpo") {
      algo = RlAlgorithm::kGrpo;
    } else {
      throw InputError("unknown algorithm '" + algo_s + "'");
    }
    const std::string mode_s = j.at("mode").get<std::string>();
    RunMode mode;
    if (mode_s == "sync") {
      mode = RunMode::kSync;
    } else if (mode_s == "async") {
      mode = RunMode::kAsync;
    } else {
      throw InputError("unknown mode '" + mode_s + "'");
    }
    double eta = j.value("eta", 0.5);

    const json& jb = j.at("batch");
    BatchConfig batch;
    batch.global_batch = jb.at("global_batch").get<std::int64_t>();
    batch.responses_per_prompt =
        jb.at("responses_per_prompt").get<std::int64_t>();
    batch.seq_in = jb.at("seq_in").get<std::int64_t>();
    batch.seq_out = jb.at("seq_out").get<std::int64_t>();
    batch.micro_batch_size = jb.at("micro_batch_size").get<std::int64_t>();

    std::map<std::string, ModelSpec> models;
    for (const auto& [name, jm] : j.at("models").items()) {
      models[name] = model_from_json(jm);
    }
    WorkflowGraph wf = build_workflow(algo, mode, models, batch, eta);
    if (j.contains("precision_bytes")) {
      for (const auto& [name, jp] : j.at("precision_bytes").items()) {
        for (RlTask& t : wf.tasks) {
          if (t.model_name == name) {
            t.precision_bytes = jp.get<int>();
          }
        }
      }
    }
    return wf;
  } catch (const json::exception& e) {
    throw InputError(std::string("workflow JSON schema error: ") + e.what());
  }
}

WorkflowGraph load_workflow(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot open workflow file: " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_workflow_json(ss.str());
}

}  // namespace hetplan
