#include "pimm/layers.hpp"

#include <cmath>
#include <utility>

#include "pimm/error.hpp"

namespace pimm {

ParamId ParameterStore::add(std::string name, Array value) {
  if (contains(name)) {
    throw ContractError("parameter already registered: " + name);
  }
  names_.push_back(std::move(name));
  params_.push_back(std::move(value));
  return params_.size() - 1;
}

ParamId ParameterStore::find(const std::string& name) const {
  for (ParamId i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw ContractError("unknown parameter: " + name);
}

bool ParameterStore::contains(const std::string& name) const {
  for (const auto& n : names_) {
    if (n == name) return true;
  }
  return false;
}

void ParameterStore::restore(const std::vector<Array>& snapshot) {
  if (snapshot.size() != params_.size()) {
    throw ContractError("snapshot size does not match parameter count");
  }
  for (std::size_t i = 0; i < snapshot.size(); ++i) {
    if (!snapshot[i].same_shape(params_[i])) {
      throw ContractError("snapshot shape mismatch for " + names_[i]);
    }
  }
  params_ = snapshot;
}

ParamBinding::ParamBinding(Graph& graph, ParameterStore& store)
    : graph_(graph), store_(store), nodes_(store.count(), kUnbound) {}

NodeId ParamBinding::node(ParamId id) {
  if (nodes_[id] == kUnbound) {
    nodes_[id] = graph_.input(store_.value(id));
  }
  return nodes_[id];
}

Array ParamBinding::grad(ParamId id) const {
  if (nodes_[id] == kUnbound) {
    const Array& v = store_.value(id);
    return Array(v.rows(), v.cols());
  }
  return graph_.grad(nodes_[id]);
}

Array glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Array w(fan_in, fan_out);
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = rng.uniform(-limit, limit);
  }
  return w;
}

Array embedding_init(std::size_t vocab, std::size_t dim, Rng& rng) {
  Array w(vocab, dim);
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = rng.uniform(-0.01, 0.01);
  }
  return w;
}

EmbeddingLayer::EmbeddingLayer(ParameterStore& store,
                               const DatasetSchema& schema, std::size_t dim,
                               Rng& rng)
    : num_fields_(schema.num_fields()),
      dim_(dim),
      vocab_sizes_(schema.vocab_sizes) {
  for (std::size_t i = 0; i < num_fields_; ++i) {
    tables_.push_back(store.add("emb." + schema.field_names[i],
                                embedding_init(vocab_sizes_[i], dim, rng)));
  }
}

NodeId EmbeddingLayer::lookup(Graph& graph, ParamBinding& binding,
                              const Batch& batch) const {
  if (batch.num_fields != num_fields_) {
    throw ShapeError("embedding lookup: batch has " +
                     std::to_string(batch.num_fields) + " fields, expected " +
                     std::to_string(num_fields_));
  }
  std::vector<NodeId> parts;
  parts.reserve(num_fields_);
  std::vector<std::uint32_t> ids(batch.size);
  for (std::size_t field = 0; field < num_fields_; ++field) {
    for (std::size_t r = 0; r < batch.size; ++r) {
      std::uint32_t id = batch.feature(r, field);
      if (id >= vocab_sizes_[field]) {
        id = 0;
        ++oov_count_;
      }
      ids[r] = id;
    }
    parts.push_back(graph.gather_rows(binding.node(tables_[field]), ids));
  }
  return parts.size() == 1 ? parts[0] : graph.concat(parts);
}

Dense::Dense(ParameterStore& store, const std::string& name, std::size_t in,
             std::size_t out, Rng& rng)
    : weight(store.add(name + ".w", glorot_uniform(in, out, rng))),
      bias(store.add(name + ".b", Array(1, out))) {}

NodeId Dense::forward(Graph& graph, ParamBinding& binding,
                      NodeId input) const {
  return graph.add(graph.matmul(input, binding.node(weight)),
                   binding.node(bias));
}

Tower::Tower(ParameterStore& store, const std::string& name,
             std::size_t input_dim, const std::vector<std::size_t>& layer_dims,
             Rng& rng) {
  if (layer_dims.empty()) {
    throw ConfigError("tower " + name + ": at least one layer required");
  }
  std::size_t in = input_dim;
  for (std::size_t i = 0; i < layer_dims.size(); ++i) {
    layers_.emplace_back(store, name + ".l" + std::to_string(i), in,
                         layer_dims[i], rng);
    in = layer_dims[i];
  }
  output_dim_ = in;
}

NodeId Tower::forward(Graph& graph, ParamBinding& binding,
                      NodeId input) const {
  NodeId x = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i].forward(graph, binding, x);
    if (i + 1 < layers_.size()) {
      x = graph.relu(x);
    }
  }
  return x;
}

AttentionUnit::AttentionUnit(ParameterStore& store, const std::string& name,
                             std::size_t d, Rng& rng)
    : dim_(d),
      q_proj_(store.add(name + ".q", glorot_uniform(d, d, rng))),
      k_proj_(store.add(name + ".k", glorot_uniform(d, d, rng))),
      v_proj_(store.add(name + ".v", glorot_uniform(d, d, rng))) {}

NodeId AttentionUnit::logit(Graph& graph, ParamBinding& binding,
                            NodeId candidate) const {
  const NodeId q = graph.matmul(candidate, binding.node(q_proj_));
  const NodeId k = graph.matmul(candidate, binding.node(k_proj_));
  return graph.scale(graph.row_sum(graph.mul(q, k)),
                     1.0 / std::sqrt(static_cast<double>(dim_)));
}

NodeId AttentionUnit::fuse(Graph& graph, ParamBinding& binding, NodeId v,
                           NodeId z) const {
  const Array& vv = graph.value(v);
  const Array& zv = graph.value(z);
  if (vv.cols() != dim_ || zv.cols() != dim_ || vv.rows() != zv.rows()) {
    throw ShapeError("attention fuse: candidates " + shape_string(vv) +
                     " and " + shape_string(zv) + " must both be batch x " +
                     std::to_string(dim_));
  }
  const NodeId weights =
      graph.softmax(graph.concat({logit(graph, binding, v),
                                  logit(graph, binding, z)}));
  const NodeId w_v = graph.slice_cols(weights, 0, 1);
  const NodeId w_z = graph.slice_cols(weights, 1, 1);
  const NodeId proj = binding.node(v_proj_);
  const NodeId weighted =
      graph.add(graph.mul(w_v, graph.matmul(v, proj)),
                graph.mul(w_z, graph.matmul(z, proj)));
  return graph.add(v, weighted);
}

}  // namespace pimm
