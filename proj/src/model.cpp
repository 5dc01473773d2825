#include "pimm/model.hpp"

#include <utility>

#include "pimm/error.hpp"

namespace pimm {

ModelKind parse_model_kind(const std::string& name) {
  if (name == "pimm") return ModelKind::kPimm;
  if (name == "shared_bottom") return ModelKind::kSharedBottom;
  if (name == "esmm") return ModelKind::kEsmm;
  if (name == "aitm") return ModelKind::kAitm;
  throw ConfigError("unknown model kind: \"" + name +
                    "\" (expected pimm, shared_bottom, esmm, or aitm)");
}

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kPimm: return "pimm";
    case ModelKind::kSharedBottom: return "shared_bottom";
    case ModelKind::kEsmm: return "esmm";
    case ModelKind::kAitm: return "aitm";
  }
  return "?";
}

void ModelConfig::validate(const DatasetSchema& schema) const {
  if (num_tasks < 2) {
    throw ConfigError("model.num_tasks must be >= 2, got " +
                      std::to_string(num_tasks));
  }
  if (num_tasks != schema.num_tasks()) {
    throw ConfigError("model.num_tasks = " + std::to_string(num_tasks) +
                      " does not match dataset with " +
                      std::to_string(schema.num_tasks()) + " tasks");
  }
  if (embedding_dim == 0) {
    throw ConfigError("model.embedding_dim must be positive");
  }
  if (tower_dims.empty()) {
    throw ConfigError("model.tower_dims must not be empty");
  }
  for (std::size_t w : tower_dims) {
    if (w == 0) throw ConfigError("model.tower_dims entries must be positive");
  }
  for (std::size_t w : bottom_dims) {
    if (w == 0) throw ConfigError("model.bottom_dims entries must be positive");
  }
  if (kind == ModelKind::kPimm) {
    schedule.validate();
  }
}

MultiTaskModel::MultiTaskModel(const ModelConfig& config,
                               const DatasetSchema& schema)
    : config_(config) {
  config_.validate(schema);
}

void MultiTaskModel::check_options(const Batch& batch,
                                   const ForwardOptions& options) const {
  if (options.mode == Mode::kTrain) {
    if (options.labels == nullptr) {
      throw ContractError("train-mode forward requires labels");
    }
    if (options.rng == nullptr) {
      throw ContractError("train-mode forward requires an rng");
    }
    if (options.labels->rows() != batch.size ||
        options.labels->cols() != config_.num_tasks) {
      throw ShapeError("labels " + shape_string(*options.labels) +
                       " do not match batch of " + std::to_string(batch.size) +
                       " and " + std::to_string(config_.num_tasks) + " tasks");
    }
  }
}

Array MultiTaskModel::label_column(const Array& labels,
                                   std::size_t task) const {
  Array col(labels.rows(), 1);
  for (std::size_t r = 0; r < labels.rows(); ++r) {
    col[r] = labels.at(r, task);
  }
  return col;
}

namespace {

/// PIMM and its ablation share everything except the explicit premise
/// path: with `use_premise` off, the merged message is just the
/// transferred hidden vector (the attention-only transfer model).
class TransferModel : public MultiTaskModel {
 public:
  TransferModel(const ModelConfig& config, const DatasetSchema& schema,
                bool use_premise, Rng rng)
      : MultiTaskModel(config, schema), use_premise_(use_premise) {
    const std::size_t m = config_.num_tasks;
    const std::size_t d = config_.transfer_dim();
    embedding_ = std::make_unique<EmbeddingLayer>(params_, schema,
                                                  config_.embedding_dim, rng);
    for (std::size_t t = 0; t < m; ++t) {
      const std::string prefix = "t" + std::to_string(t);
      towers_.emplace_back(params_, prefix + ".tower",
                           embedding_->output_width(), config_.tower_dims,
                           rng);
      heads_.emplace_back(params_, prefix + ".head", d, 1, rng);
      if (t + 1 < m) {
        hidden_.emplace_back(params_, prefix + ".hidden", d, d, rng);
      }
      if (t >= 1) {
        attention_.emplace_back(params_, prefix + ".attn", d, rng);
        if (use_premise_) {
          premise_.emplace_back(params_, prefix + ".premise", d, rng);
        }
      }
    }
  }

  TaskOutputs forward(Graph& graph, ParamBinding& binding, const Batch& batch,
                      const ForwardOptions& options) override {
    check_options(batch, options);
    TaskOutputs out;
    const std::size_t m = config_.num_tasks;
    const NodeId emb = embedding_->lookup(graph, binding, batch);
    NodeId prev_hidden = 0;
    NodeId prev_prob = 0;
    for (std::size_t t = 0; t < m; ++t) {
      const NodeId v = towers_[t].forward(graph, binding, emb);
      NodeId repr = v;
      if (t >= 1) {
        NodeId merged;
        if (use_premise_) {
          const double p = sampling_probability(config_.schedule,
                                                options.epoch);
          std::optional<Array> y_true;
          if (options.mode == Mode::kTrain) {
            y_true = label_column(*options.labels, t - 1);
          }
          const NodeId y_star =
              select_premise(graph, y_true, prev_prob, p,
                             options.mode == Mode::kTrain ? *options.rng
                                                          : dummy_rng_,
                             options.mode, &out.premise_stats);
          const NodeId z = premise_[t - 1].embed(graph, binding, y_star);
          merged = merge_messages(graph, z, prev_hidden);
        } else {
          merged = prev_hidden;
        }
        repr = attention_[t - 1].fuse(graph, binding, v, merged);
      }
      const NodeId prob =
          graph.sigmoid(heads_[t].forward(graph, binding, repr));
      out.probabilities.push_back(prob);
      out.fused.push_back(repr);
      if (t + 1 < m) {
        prev_hidden = hidden_[t].forward(graph, binding, repr);
        out.hidden.push_back(prev_hidden);
      }
      prev_prob = prob;
    }
    return out;
  }

 private:
  bool use_premise_;
  std::vector<Tower> towers_;
  std::vector<Dense> heads_;
  std::vector<Dense> hidden_;
  std::vector<AttentionUnit> attention_;
  std::vector<PremiseEmbedder> premise_;
  Rng dummy_rng_{0};  // never advanced; infer mode takes no draws
};

class SharedBottomModel : public MultiTaskModel {
 public:
  SharedBottomModel(const ModelConfig& config, const DatasetSchema& schema,
                    Rng rng)
      : MultiTaskModel(config, schema) {
    embedding_ = std::make_unique<EmbeddingLayer>(params_, schema,
                                                  config_.embedding_dim, rng);
    std::size_t tower_input = embedding_->output_width();
    if (!config_.bottom_dims.empty()) {
      bottom_ = Tower(params_, "bottom", tower_input, config_.bottom_dims,
                      rng);
      has_bottom_ = true;
      tower_input = bottom_.output_dim();
    }
    for (std::size_t t = 0; t < config_.num_tasks; ++t) {
      const std::string prefix = "t" + std::to_string(t);
      towers_.emplace_back(params_, prefix + ".tower", tower_input,
                           config_.tower_dims, rng);
      heads_.emplace_back(params_, prefix + ".head", config_.transfer_dim(),
                          1, rng);
    }
  }

  TaskOutputs forward(Graph& graph, ParamBinding& binding, const Batch& batch,
                      const ForwardOptions& options) override {
    check_options(batch, options);
    TaskOutputs out;
    NodeId shared = embedding_->lookup(graph, binding, batch);
    if (has_bottom_) {
      // The trunk is all-rectifier; towers then start from its features.
      shared = graph.relu(bottom_.forward(graph, binding, shared));
    }
    for (std::size_t t = 0; t < config_.num_tasks; ++t) {
      const NodeId v = towers_[t].forward(graph, binding, shared);
      out.fused.push_back(v);
      out.probabilities.push_back(
          graph.sigmoid(heads_[t].forward(graph, binding, v)));
    }
    return out;
  }

 private:
  Tower bottom_;
  bool has_bottom_ = false;
  std::vector<Tower> towers_;
  std::vector<Dense> heads_;
};

class EsmmModel : public MultiTaskModel {
 public:
  EsmmModel(const ModelConfig& config, const DatasetSchema& schema, Rng rng)
      : MultiTaskModel(config, schema) {
    embedding_ = std::make_unique<EmbeddingLayer>(params_, schema,
                                                  config_.embedding_dim, rng);
    for (std::size_t t = 0; t < config_.num_tasks; ++t) {
      const std::string prefix = "t" + std::to_string(t);
      towers_.emplace_back(params_, prefix + ".tower",
                           embedding_->output_width(), config_.tower_dims,
                           rng);
      heads_.emplace_back(params_, prefix + ".head", config_.transfer_dim(),
                          1, rng);
    }
  }

  TaskOutputs forward(Graph& graph, ParamBinding& binding, const Batch& batch,
                      const ForwardOptions& options) override {
    check_options(batch, options);
    TaskOutputs out;
    const NodeId emb = embedding_->lookup(graph, binding, batch);
    NodeId chained = 0;
    for (std::size_t t = 0; t < config_.num_tasks; ++t) {
      const NodeId v = towers_[t].forward(graph, binding, emb);
      out.fused.push_back(v);
      const NodeId conditional =
          graph.sigmoid(heads_[t].forward(graph, binding, v));
      out.conditionals.push_back(conditional);
      // Entire-space chaining: the reported probability multiplies the
      // upstream probability into the conditional head.
      chained = t == 0 ? conditional : graph.mul(chained, conditional);
      out.probabilities.push_back(chained);
    }
    return out;
  }

 private:
  std::vector<Tower> towers_;
  std::vector<Dense> heads_;
};

}  // namespace

std::unique_ptr<MultiTaskModel> make_model(const ModelConfig& config,
                                           const DatasetSchema& schema,
                                           std::uint64_t seed) {
  Rng rng = Rng::derive(seed, 0x1417);
  switch (config.kind) {
    case ModelKind::kPimm:
      return std::make_unique<TransferModel>(config, schema, true, rng);
    case ModelKind::kAitm:
      return std::make_unique<TransferModel>(config, schema, false, rng);
    case ModelKind::kSharedBottom:
      return std::make_unique<SharedBottomModel>(config, schema, rng);
    case ModelKind::kEsmm:
      return std::make_unique<EsmmModel>(config, schema, rng);
  }
  throw ContractError("unhandled model kind");
}

NodeId multitask_loss(Graph& graph, const TaskOutputs& outputs,
                      const Array& labels) {
  const std::size_t m = outputs.probabilities.size();
  if (labels.cols() != m) {
    throw ShapeError("multitask_loss: labels " + shape_string(labels) +
                     " vs " + std::to_string(m) + " task outputs");
  }
  for (std::size_t r = 0; r < labels.rows(); ++r) {
    for (std::size_t t = 0; t + 1 < m; ++t) {
      if (labels.at(r, t) == 0.0 && labels.at(r, t + 1) == 1.0) {
        throw ValueError("multitask_loss: row " + std::to_string(r) +
                         " violates the dependence constraint at tasks " +
                         std::to_string(t) + "," + std::to_string(t + 1));
      }
    }
  }
  NodeId loss = 0;
  for (std::size_t t = 0; t < m; ++t) {
    Array col(labels.rows(), 1);
    for (std::size_t r = 0; r < labels.rows(); ++r) {
      col[r] = labels.at(r, t);
    }
    const NodeId task_loss = graph.bce(outputs.probabilities[t], col);
    loss = t == 0 ? task_loss : graph.add(loss, task_loss);
  }
  return loss;
}

}  // namespace pimm
