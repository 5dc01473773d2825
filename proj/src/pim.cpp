#include "pimm/pim.hpp"

#include <algorithm>
#include <string>

#include "pimm/error.hpp"

namespace pimm {

void ScheduleConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("pim.alpha must lie in [0, 1], got " +
                      std::to_string(alpha));
  }
  if (!(speed >= 0.0)) {
    throw ConfigError("pim.speed must be >= 0, got " + std::to_string(speed));
  }
  if (!(beta >= 0.0 && beta <= alpha)) {
    throw ConfigError("pim.beta must lie in [0, alpha], got " +
                      std::to_string(beta));
  }
}

double sampling_probability(const ScheduleConfig& config, std::size_t epoch) {
  return std::max(config.alpha - static_cast<double>(epoch) * config.speed,
                  config.beta);
}

NodeId select_premise(Graph& graph, const std::optional<Array>& y_true,
                      NodeId y_hat, double p, Rng& rng, Mode mode,
                      SelectStats* stats) {
  if (mode == Mode::kInfer) {
    return graph.stop_gradient(y_hat);
  }
  if (!y_true.has_value()) {
    throw ContractError("select_premise: train mode requires labels");
  }
  const Array& prediction = graph.value(y_hat);
  if (!prediction.same_shape(*y_true)) {
    throw ShapeError("select_premise: labels " + shape_string(*y_true) +
                     " vs predictions " + shape_string(prediction));
  }
  Array mask(prediction.rows(), prediction.cols());
  Array inverse(prediction.rows(), prediction.cols());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const bool pick_label = rng.bernoulli(p);
    mask[i] = pick_label ? 1.0 : 0.0;
    inverse[i] = pick_label ? 0.0 : 1.0;
    if (stats != nullptr) {
      stats->label_picks += pick_label ? 1 : 0;
      ++stats->total;
    }
  }
  const NodeId mixed =
      graph.add(graph.mul(graph.input(std::move(mask)), graph.input(*y_true)),
                graph.mul(graph.input(std::move(inverse)), y_hat));
  return graph.stop_gradient(mixed);
}

PremiseEmbedder::PremiseEmbedder(ParameterStore& store, const std::string& name,
                                 std::size_t d, Rng& rng)
    : weight_(store.add(name + ".w", glorot_uniform(1, d, rng))) {}

NodeId PremiseEmbedder::embed(Graph& graph, ParamBinding& binding,
                              NodeId y_star) const {
  return graph.sigmoid(graph.matmul(y_star, binding.node(weight_)));
}

NodeId merge_messages(Graph& graph, NodeId explicit_z, NodeId implicit_h) {
  const Array& z = graph.value(explicit_z);
  const Array& h = graph.value(implicit_h);
  if (!z.same_shape(h)) {
    throw ShapeError("merge_messages: " + shape_string(z) + " vs " +
                     shape_string(h));
  }
  return graph.add(explicit_z, implicit_h);
}

}  // namespace pimm
