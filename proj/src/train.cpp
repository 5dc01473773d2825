#include "pimm/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "pimm/error.hpp"

namespace pimm {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) {
    throw ConfigError("train.learning_rate must be positive");
  }
  if (batch_size == 0) {
    throw ConfigError("train.batch_size must be >= 1");
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("train.val_fraction must lie in (0, 1)");
  }
  if (seeds.empty()) {
    throw ConfigError("train.seeds must not be empty");
  }
}

AdamOptimizer::AdamOptimizer(ParameterStore& store, double learning_rate,
                             double beta1, double beta2, double eps)
    : store_(store), lr_(learning_rate), beta1_(beta1), beta2_(beta2),
      eps_(eps) {
  for (ParamId i = 0; i < store.count(); ++i) {
    const Array& p = store.value(i);
    m_.emplace_back(p.rows(), p.cols());
    v_.emplace_back(p.rows(), p.cols());
  }
}

void AdamOptimizer::step(const std::vector<Array>& grads) {
  if (grads.size() != m_.size()) {
    throw ContractError("gradient list does not match parameter count");
  }
  ++steps_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (ParamId i = 0; i < grads.size(); ++i) {
    Array& p = store_.value(i);
    const Array& g = grads[i];
    if (!g.same_shape(p)) {
      throw ContractError("gradient shape mismatch for " + store_.name(i));
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gv = g[j];
      if (!std::isfinite(gv)) {
        throw NumericError("non-finite gradient for parameter " +
                           store_.name(i));
      }
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * gv;
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * gv * gv;
      const double m_hat = m_[i][j] / bc1;
      const double v_hat = v_[i][j] / bc2;
      p[j] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

TrainResult train_loop(MultiTaskModel& model, const TrainConfig& config,
                       const CascadeDataset& train, const CascadeDataset& val,
                       std::uint64_t seed) {
  config.validate();
  const std::size_t num_tasks = model.config().num_tasks;
  AdamOptimizer optimizer(model.params(), config.learning_rate);
  BatchIterator batches(train, config.batch_size, Rng::derive(seed, 0x0e0)
                                                      .next_u64());
  Rng premise_rng = Rng::derive(seed, 0x9e1);

  TrainResult result;
  std::vector<Array> best_params;
  double best_final_auc = -1.0;

  for (std::size_t epoch = 0; epoch <= config.max_epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (const Batch& batch : batches.epoch(epoch)) {
      Graph graph;
      ParamBinding binding(graph, model.params());
      ForwardOptions options;
      options.mode = Mode::kTrain;
      options.labels = &batch.labels;
      options.epoch = epoch;
      options.rng = &premise_rng;
      try {
        TaskOutputs outputs = model.forward(graph, binding, batch, options);
        result.premise_stats.label_picks +=
            outputs.premise_stats.label_picks;
        result.premise_stats.total += outputs.premise_stats.total;
        const NodeId loss = multitask_loss(graph, outputs, batch.labels);
        const double loss_value = graph.value(loss)[0];
        if (!std::isfinite(loss_value)) {
          throw NumericError("loss is not finite");
        }
        graph.backward(loss);
        std::vector<Array> grads;
        grads.reserve(model.params().count());
        for (ParamId i = 0; i < model.params().count(); ++i) {
          grads.push_back(binding.grad(i));
        }
        optimizer.step(grads);
        epoch_loss += loss_value * static_cast<double>(batch.size);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(batch_index) + ": " + e.what());
      }
      ++batch_index;
    }
    result.loss_curve.push_back(epoch_loss /
                                static_cast<double>(train.num_rows()));

    const std::vector<double> val_auc =
        evaluate_auc(model, val, config.batch_size);
    if (val_auc.back() > best_final_auc) {
      best_final_auc = val_auc.back();
      best_params = model.params().snapshot();
      result.selected_epoch = epoch;
      result.val_auc = val_auc;
    }
  }
  if (!best_params.empty()) {
    model.params().restore(best_params);
  }
  if (result.val_auc.empty()) {
    result.val_auc.assign(num_tasks, 0.5);
  }
  return result;
}

std::vector<std::vector<double>> predict_scores(MultiTaskModel& model,
                                                const CascadeDataset& dataset,
                                                std::size_t batch_size) {
  const std::size_t num_tasks = model.config().num_tasks;
  std::vector<std::vector<double>> scores(num_tasks);
  for (auto& s : scores) s.reserve(dataset.num_rows());
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < dataset.num_rows();
       start += batch_size) {
    const std::size_t end = std::min(start + batch_size, dataset.num_rows());
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    const Batch batch = make_batch(dataset, rows, false);
    Graph graph;
    ParamBinding binding(graph, model.params());
    ForwardOptions options;  // infer mode
    const TaskOutputs outputs = model.forward(graph, binding, batch, options);
    for (std::size_t t = 0; t < num_tasks; ++t) {
      const Array& p = graph.value(outputs.probabilities[t]);
      for (std::size_t i = 0; i < p.size(); ++i) {
        scores[t].push_back(p[i]);
      }
    }
  }
  return scores;
}

std::vector<double> evaluate_auc(MultiTaskModel& model,
                                 const CascadeDataset& dataset,
                                 std::size_t batch_size) {
  const auto scores = predict_scores(model, dataset, batch_size);
  const std::size_t num_tasks = model.config().num_tasks;
  std::vector<double> auc(num_tasks);
  std::vector<std::uint8_t> labels(dataset.num_rows());
  for (std::size_t t = 0; t < num_tasks; ++t) {
    for (std::size_t r = 0; r < dataset.num_rows(); ++r) {
      labels[r] = dataset.label(r, t);
    }
    auc[t] = compute_auc(scores[t], labels);
  }
  return auc;
}

double compute_auc(const std::vector<double>& scores,
                   const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size()) {
    throw ContractError("compute_auc: " + std::to_string(scores.size()) +
                        " scores vs " + std::to_string(labels.size()) +
                        " labels");
  }
  std::size_t positives = 0;
  for (std::uint8_t y : labels) positives += y;
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw ValueError("AUC undefined: need both classes, got " +
                     std::to_string(positives) + " positives out of " +
                     std::to_string(labels.size()));
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&scores](std::size_t a,
                                                  std::size_t b) {
    return scores[a] < scores[b];
  });
  // Average rank within each tie group credits tied pairs with one half.
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) positive_rank_sum += avg_rank;
    }
    i = j;
  }
  const double p = static_cast<double>(positives);
  const double n = static_cast<double>(negatives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

Aggregate aggregate_runs(const std::vector<double>& values) {
  if (values.empty()) {
    throw ContractError("aggregate_runs: no values");
  }
  Aggregate agg;
  for (double v : values) agg.mean += v;
  agg.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
  agg.stddev = std::sqrt(ss / static_cast<double>(values.size()));
  return agg;
}

std::string format_mean_std(const Aggregate& aggregate) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f ± %.4f", aggregate.mean,
                aggregate.stddev);
  return buf;
}

}  // namespace pimm
