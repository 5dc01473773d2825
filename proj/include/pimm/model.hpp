#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pimm/data.hpp"
#include "pimm/graph.hpp"
#include "pimm/layers.hpp"
#include "pimm/pim.hpp"
#include "pimm/rng.hpp"

namespace pimm {

enum class ModelKind { kPimm, kSharedBottom, kEsmm, kAitm };

ModelKind parse_model_kind(const std::string& name);
const char* model_kind_name(ModelKind kind);

struct ModelConfig {
  ModelKind kind = ModelKind::kPimm;
  std::size_t num_tasks = 2;
  std::size_t embedding_dim = 5;
  std::vector<std::size_t> tower_dims = {128, 64, 32};
  std::vector<std::size_t> bottom_dims = {64};  // shared_bottom trunk
  ScheduleConfig schedule;                      // pimm only

  /// Transfer width d: the last tower width.
  std::size_t transfer_dim() const { return tower_dims.back(); }

  void validate(const DatasetSchema& schema) const;
};

struct ForwardOptions {
  Mode mode = Mode::kInfer;
  const Array* labels = nullptr;  // [batch x M]; train mode only
  std::size_t epoch = 0;          // train mode only
  Rng* rng = nullptr;             // train mode only
};

/// Per-task heads plus whatever intermediate state the model kind exposes.
struct TaskOutputs {
  std::vector<NodeId> probabilities;  // reported probability per task
  std::vector<NodeId> fused;          // U_t (v_t for the first task)
  std::vector<NodeId> hidden;         // H_t for tasks that transfer onward
  std::vector<NodeId> conditionals;   // esmm only: per-task conditional head
  SelectStats premise_stats;          // pimm only
};

/// Shared forward interface so the training loop and the comparison
/// harness never branch on the model kind.
class MultiTaskModel {
 public:
  virtual ~MultiTaskModel() = default;

  virtual TaskOutputs forward(Graph& graph, ParamBinding& binding,
                              const Batch& batch,
                              const ForwardOptions& options) = 0;

  ParameterStore& params() { return params_; }
  const ModelConfig& config() const { return config_; }
  const EmbeddingLayer& embedding() const { return *embedding_; }

 protected:
  MultiTaskModel(const ModelConfig& config, const DatasetSchema& schema);

  /// Throws ContractError unless train mode carries labels and an rng of
  /// the right shape; infer mode ignores both.
  void check_options(const Batch& batch, const ForwardOptions& options) const;

  Array label_column(const Array& labels, std::size_t task) const;

  ModelConfig config_;
  ParameterStore params_;
  std::unique_ptr<EmbeddingLayer> embedding_;
};

/// Builds the requested model with seed-deterministic initialization.
std::unique_ptr<MultiTaskModel> make_model(const ModelConfig& config,
                                           const DatasetSchema& schema,
                                           std::uint64_t seed);

/// Equal-weight sum of per-task binary cross-entropies on the reported
/// probabilities. Rejects label rows violating the dependence constraint,
/// naming the first offending row.
NodeId multitask_loss(Graph& graph, const TaskOutputs& outputs,
                      const Array& labels);

}  // namespace pimm
