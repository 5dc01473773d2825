#pragma once

#include <cstdint>
#include <optional>

#include "pimm/array.hpp"
#include "pimm/graph.hpp"
#include "pimm/layers.hpp"
#include "pimm/rng.hpp"

namespace pimm {

enum class Mode { kTrain, kInfer };

/// Curriculum parameters for the premise sampling probability
/// p(E) = max(alpha - E * speed, beta): start at alpha, drop by `speed`
/// per epoch, never below the floor beta.
struct ScheduleConfig {
  double alpha = 0.5;
  double speed = 0.25;
  double beta = 0.25;

  void validate() const;
};

/// Probability of feeding the ground-truth label at epoch `epoch`.
/// Constant within an epoch, non-increasing across epochs.
double sampling_probability(const ScheduleConfig& config, std::size_t epoch);

/// How often the premise draw picked the label vs. the prediction.
struct SelectStats {
  std::uint64_t label_picks = 0;
  std::uint64_t total = 0;
};

/// Chooses the explicit premise per sample: in train mode an independent
/// Bernoulli(p) draw picks the ground-truth label, otherwise the upstream
/// prediction; in infer mode always the prediction (labels and rng are
/// ignored). The result is wrapped in stop_gradient, so downstream losses
/// never reach the upstream task through this value.
NodeId select_premise(Graph& graph, const std::optional<Array>& y_true,
                      NodeId y_hat, double p, Rng& rng, Mode mode,
                      SelectStats* stats = nullptr);

/// Trainable [1 x d] map from the scalar premise to the explicit-information
/// vector Z = sigmoid(y* W).
class PremiseEmbedder {
 public:
  PremiseEmbedder() = default;
  PremiseEmbedder(ParameterStore& store, const std::string& name,
                  std::size_t d, Rng& rng);

  NodeId embed(Graph& graph, ParamBinding& binding, NodeId y_star) const;

 private:
  ParamId weight_ = 0;
};

/// Z^m = Z + H: explicit premise plus the transferred implicit
/// representation, elementwise.
NodeId merge_messages(Graph& graph, NodeId explicit_z, NodeId implicit_h);

}  // namespace pimm
