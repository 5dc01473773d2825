#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "pimm/array.hpp"
#include "pimm/data.hpp"
#include "pimm/graph.hpp"
#include "pimm/rng.hpp"

namespace pimm {

using ParamId = std::size_t;

/// Ordered, named collection of trainable arrays. Creation order is the
/// canonical order for optimizer state and checkpoints, so models must
/// register parameters deterministically.
class ParameterStore {
 public:
  ParamId add(std::string name, Array value);

  std::size_t count() const { return params_.size(); }
  const std::string& name(ParamId id) const { return names_[id]; }
  const Array& value(ParamId id) const { return params_[id]; }
  Array& value(ParamId id) { return params_[id]; }

  /// Id of a named parameter; throws if absent.
  ParamId find(const std::string& name) const;
  bool contains(const std::string& name) const;

  /// Deep copy of all values (for best-epoch snapshots).
  std::vector<Array> snapshot() const { return params_; }
  void restore(const std::vector<Array>& snapshot);

 private:
  std::vector<std::string> names_;
  std::vector<Array> params_;
};

/// Per-forward-pass bridge between a ParameterStore and a Graph: the first
/// use of a parameter creates its leaf node, later uses reuse it, and after
/// backward() the gradient can be read back per parameter id.
class ParamBinding {
 public:
  ParamBinding(Graph& graph, ParameterStore& store);

  NodeId node(ParamId id);
  bool bound(ParamId id) const { return nodes_[id] != kUnbound; }

  /// Gradient of the bound leaf; zeros if the parameter was never used.
  Array grad(ParamId id) const;

  ParameterStore& store() { return store_; }

 private:
  static constexpr NodeId kUnbound = std::numeric_limits<NodeId>::max();
  Graph& graph_;
  ParameterStore& store_;
  std::vector<NodeId> nodes_;
};

/// Uniform Xavier/Glorot draw in +-sqrt(6 / (fan_in + fan_out)).
Array glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Embedding rows drawn uniformly in +-0.01.
Array embedding_init(std::size_t vocab, std::size_t dim, Rng& rng);

/// One table per categorical field; lookup concatenates the per-field rows
/// in schema order into a [batch x num_fields*dim] block. Ids at or above
/// the vocab size fall back to the reserved row 0 and bump the OOV counter.
class EmbeddingLayer {
 public:
  EmbeddingLayer(ParameterStore& store, const DatasetSchema& schema,
                 std::size_t dim, Rng& rng);

  NodeId lookup(Graph& graph, ParamBinding& binding, const Batch& batch) const;

  std::size_t output_width() const { return num_fields_ * dim_; }
  std::uint64_t oov_count() const { return oov_count_; }

 private:
  std::size_t num_fields_;
  std::size_t dim_;
  std::vector<std::size_t> vocab_sizes_;
  std::vector<ParamId> tables_;
  mutable std::uint64_t oov_count_ = 0;
};

/// Single affine layer (weight [in x out] + bias row), optional rectifier.
struct Dense {
  Dense() = default;
  Dense(ParameterStore& store, const std::string& name, std::size_t in,
        std::size_t out, Rng& rng);

  NodeId forward(Graph& graph, ParamBinding& binding, NodeId input) const;

  ParamId weight = 0;
  ParamId bias = 0;
};

/// MLP tower: rectifier on every hidden layer, linear final layer. The
/// last width is the transfer dimension d used across the whole model.
class Tower {
 public:
  Tower() = default;
  Tower(ParameterStore& store, const std::string& name, std::size_t input_dim,
        const std::vector<std::size_t>& layer_dims, Rng& rng);

  NodeId forward(Graph& graph, ParamBinding& binding, NodeId input) const;

  std::size_t output_dim() const { return output_dim_; }

 private:
  std::vector<Dense> layers_;
  std::size_t output_dim_ = 0;
};

/// Two-candidate self-attention with a residual connection. For each
/// candidate a in {v, z} the logit is dot(Q(a), K(a)) / sqrt(d) per sample,
/// the two logits go through a softmax, and the output is
/// v + w_v * V(v) + w_z * V(z).
class AttentionUnit {
 public:
  AttentionUnit() = default;
  AttentionUnit(ParameterStore& store, const std::string& name, std::size_t d,
                Rng& rng);

  NodeId fuse(Graph& graph, ParamBinding& binding, NodeId v, NodeId z) const;

  std::size_t dim() const { return dim_; }

 private:
  NodeId logit(Graph& graph, ParamBinding& binding, NodeId candidate) const;

  std::size_t dim_ = 0;
  ParamId q_proj_ = 0;
  ParamId k_proj_ = 0;
  ParamId v_proj_ = 0;
};

}  // namespace pimm
