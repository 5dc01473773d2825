#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pimm/array.hpp"

namespace pimm {

/// Names and sizes of the categorical feature fields plus the ordered task
/// list. Field/task order is the on-disk column order and the dependence
/// order respectively.
struct DatasetSchema {
  std::vector<std::string> field_names;
  std::vector<std::size_t> vocab_sizes;  // one per field, each >= 2
  std::vector<std::string> task_names;   // ordered by dependence, >= 2

  std::size_t num_fields() const { return field_names.size(); }
  std::size_t num_tasks() const { return task_names.size(); }
  void validate() const;
};

/// Rows of categorical ids plus an M-length 0/1 label vector per row.
/// Every stored row satisfies the cascade constraint: a task label can be 1
/// only if the previous task's label is 1.
class CascadeDataset {
 public:
  CascadeDataset(DatasetSchema schema, std::vector<std::uint32_t> features,
                 std::vector<std::uint8_t> labels);

  const DatasetSchema& schema() const { return schema_; }
  std::size_t num_rows() const { return num_rows_; }

  std::uint32_t feature(std::size_t row, std::size_t field) const {
    return features_[row * schema_.num_fields() + field];
  }
  std::uint8_t label(std::size_t row, std::size_t task) const {
    return labels_[row * schema_.num_tasks() + task];
  }

  /// Empirical P(y_t = 1).
  double positive_rate(std::size_t task) const;

  /// Rows selected by index, in order. Indices must be valid.
  CascadeDataset subset(const std::vector<std::size_t>& rows) const;

 private:
  DatasetSchema schema_;
  std::size_t num_rows_;
  std::vector<std::uint32_t> features_;
  std::vector<std::uint8_t> labels_;
};

/// Controls for the synthetic cascade generator.
///
/// Per-task logits are random linear maps over the one-hot features; each
/// downstream task additionally inherits the previous task's logit, so a
/// model that learns task t genuinely knows something about task t+1. An
/// intercept found by bisection calibrates each task's conditional positive
/// rate to `rates[t]`.
struct SyntheticConfig {
  std::size_t num_samples = 0;
  std::size_t test_samples = 0;  // drawn from the same latent maps
  std::size_t num_fields = 0;
  std::vector<std::size_t> vocab_sizes;   // one per field or a single value
  std::vector<double> weight_scales;      // one per task or a single value
  std::vector<double> rates;              // conditional positive rate per task
  std::uint64_t seed = 0;

  void validate() const;
};

/// Deterministically generates `num_samples + test_samples` rows; the first
/// block is the train portion. rates[t] = 1 or 0 short-circuit the draw.
CascadeDataset generate_cascade(const SyntheticConfig& config);

/// Counts reported by the CSV loader.
struct LoadReport {
  std::size_t rows = 0;
  std::vector<std::size_t> oov_per_field;  // ids clamped to index 0
};

/// Reads a dataset written in the library's CSV layout: header
/// `f_<field>,...,y_<task>,...` matching the schema, then one row per
/// sample. Malformed cells raise DataError with the line number; any row
/// violating the cascade constraint fails the whole load, naming the row
/// and the offending adjacent pair. Out-of-vocabulary ids map to 0 and are
/// counted in the report.
CascadeDataset load_csv_dataset(const std::string& path,
                                const DatasetSchema& schema,
                                LoadReport* report = nullptr);

/// Writes the matching CSV (atomic: temp file + rename).
void save_csv_dataset(const CascadeDataset& dataset, const std::string& path);

/// Deterministic shuffle-split; `fraction` of rows go to the second part.
std::pair<CascadeDataset, CascadeDataset> split_dataset(
    const CascadeDataset& dataset, double fraction, std::uint64_t seed);

/// One forward-pass worth of rows. Labels are carried as a [size x M]
/// array of 0/1 doubles when present.
struct Batch {
  std::size_t size = 0;
  std::size_t num_fields = 0;
  std::vector<std::uint32_t> features;  // row-major [size x num_fields]
  bool has_labels = false;
  Array labels;

  std::uint32_t feature(std::size_t row, std::size_t field) const {
    return features[row * num_fields + field];
  }
};

Batch make_batch(const CascadeDataset& dataset,
                 const std::vector<std::size_t>& rows, bool with_labels);

/// Seeded batch sequence. Each epoch draws a fresh permutation from
/// (seed, epoch), emits full batches in order and a final partial batch.
class BatchIterator {
 public:
  BatchIterator(const CascadeDataset& dataset, std::size_t batch_size,
                std::uint64_t seed);

  /// All batches of one epoch, with labels attached.
  std::vector<Batch> epoch(std::size_t epoch_index) const;

  /// Index layout of one epoch without materializing the batches.
  std::vector<std::vector<std::size_t>> epoch_indices(
      std::size_t epoch_index) const;

 private:
  const CascadeDataset& dataset_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

}  // namespace pimm
