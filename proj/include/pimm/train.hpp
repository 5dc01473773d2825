#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pimm/data.hpp"
#include "pimm/model.hpp"

namespace pimm {

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 10;  // epoch index E runs 0..max_epochs inclusive
  double val_fraction = 0.1;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

  void validate() const;
};

/// Adam with bias correction. State is kept per parameter in registration
/// order; a non-finite gradient aborts the run with a NumericError.
class AdamOptimizer {
 public:
  AdamOptimizer(ParameterStore& store, double learning_rate,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// Applies one update; `grads` must be aligned with the store.
  void step(const std::vector<Array>& grads);

  std::uint64_t steps_taken() const { return steps_; }

 private:
  ParameterStore& store_;
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t steps_ = 0;
  std::vector<Array> m_;
  std::vector<Array> v_;
};

/// Outcome of a single training run (one seed).
struct TrainResult {
  std::vector<double> val_auc;     // per task, at the selected epoch
  std::vector<double> loss_curve;  // mean train loss per epoch
  std::size_t selected_epoch = 0;
  SelectStats premise_stats;       // accumulated over training forwards
};

/// Runs the epoch loop: for E = 0..max_epochs the curriculum probability
/// is sampling_probability(E); every batch does forward (train mode),
/// joint loss, backward, Adam. After each epoch the per-task validation
/// AUC is measured in infer mode, and the parameters of the epoch with the
/// best final-task validation AUC are restored into the model at the end.
TrainResult train_loop(MultiTaskModel& model, const TrainConfig& config,
                       const CascadeDataset& train, const CascadeDataset& val,
                       std::uint64_t seed);

/// Per-task infer-mode scores over a whole dataset.
std::vector<std::vector<double>> predict_scores(MultiTaskModel& model,
                                                const CascadeDataset& dataset,
                                                std::size_t batch_size);

/// Per-task AUC of a model over a dataset.
std::vector<double> evaluate_auc(MultiTaskModel& model,
                                 const CascadeDataset& dataset,
                                 std::size_t batch_size);

/// Rank-based Mann-Whitney AUC: ties credited half. Throws ValueError
/// unless both classes are present.
double compute_auc(const std::vector<double>& scores,
                   const std::vector<std::uint8_t>& labels);

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // population form (divide by n)
};

Aggregate aggregate_runs(const std::vector<double>& values);

/// "0.6500 ± 0.0100"
std::string format_mean_std(const Aggregate& aggregate);

}  // namespace pimm
