// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace hetplan {

inline constexpr int kBytesBF16 = 2;
inline constexpr int kBytesFP32 = 4;

// Transformer shape. Parameter count is derived from the dense layer shape;
// vocabulary/token embeddings are excluded unless opted in.
struct ModelSpec {
  std::int64_t hidden_size = 0;        // h1
  std::int64_t intermediate_size = 0;  // h2
  std::int64_t num_layers = 0;         // nl
  bool include_embedding = false;
  std::int64_t vocab_size = 0;

  std::int64_t layer_params() const {
    return 4 * hidden_size * hidden_size +
           3 * hidden_size * intermediate_size;
  }
  std::int64_t embedding_params() const {
    return include_embedding ? 2 * vocab_size * hidden_size : 0;
  }
  std::int64_t param_count() const {
    return num_layers * layer_params() + embedding_params();
  }
  void validate() const;
};

struct BatchConfig {
  std::int64_t global_batch = 1;        // prompts per iteration
  std::int64_t responses_per_prompt = 1;
  std::int64_t seq_in = 1;              // max prompt tokens
  std::int64_t seq_out = 0;             // max response tokens
  std::int64_t micro_batch_size = 1;

  std::int64_t total_sequences() const {
    return global_batch * responses_per_prompt;
  }
  void validate() const;
};

enum class TaskKind { kGeneration, kInference, kTraining };
enum class RlAlgorithm { kPpo, kGrpo };
enum class RunMode { kSync, kAsync };

const char* to_string(TaskKind k);
const char* to_string(RlAlgorithm a);
const char* to_string(RunMode m);

struct RlTask {
  int id = 0;  // 1..6 (PPO); {1,2,3,6} (GRPO)
  TaskKind kind = TaskKind::kInference;
  std::string model_name;  // actor | critic | reward | reference
  ModelSpec model;
  int precision_bytes = kBytesBF16;
};

struct WorkflowGraph {
  RlAlgorithm algorithm = RlAlgorithm::kPpo;
  RunMode mode = RunMode::kSync;
  double eta = 0.5;  // task-parallelism coefficient, 0 sequential .. 1 parallel
  BatchConfig batch;
  std::vector<RlTask> tasks;                // ordered by id
  std::set<std::pair<int, int>> dep_edges;  // (producer id, consumer id)

  bool has_task(int id) const;
  const RlTask& task(int id) const;  // throws InputError for unknown id
};

// Task ids an algorithm requires, in order.
std::vector<int> algorithm_task_ids(RlAlgorithm a);
// Model each task id runs ("actor", "reward", ...).
std::string task_model_name(int task_id);

// Assembles the workflow graph: task list per algorithm and the dependency
// edges (generation feeds every inference; every inference feeds every
// training task). `models` is keyed by model name.
WorkflowGraph build_workflow(RlAlgorithm algorithm, RunMode mode,
                             const std::map<std::string, ModelSpec>& models,
                             const BatchConfig& batch, double eta);

// nm = ceil(total sequences / (dp * mbs)); the last micro-batch is padded.
std::int64_t derive_num_microbatches(const BatchConfig& batch,
                                     std::int64_t dp_degree, TaskKind kind);

WorkflowGraph parse_workflow_json(const std::string& text);
WorkflowGraph load_workflow(const std::string& path);

}  // namespace hetplan
