#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pimm/config.hpp"
#include "pimm/data.hpp"
#include "pimm/model.hpp"
#include "pimm/train.hpp"

namespace pimm {

/// Schema described by the config: explicit data.fields/data.tasks when
/// present, otherwise the synthetic generator layout.
DatasetSchema schema_from_config(const RunConfig& config);

SyntheticConfig synthetic_config_from(const RunConfig& config);

/// Model settings for the given kind name ("pimm" pulls the pim.* keys,
/// which are required in that case).
ModelConfig model_config_from(const RunConfig& config,
                              const DatasetSchema& schema,
                              const std::string& kind);

TrainConfig train_config_from(const RunConfig& config);

/// One (model, seed) training run within a comparison.
struct CompareRun {
  ModelKind kind = ModelKind::kPimm;
  std::uint64_t seed = 0;
  std::vector<double> test_auc;  // per task
};

struct CompareResults {
  std::vector<std::string> task_names;
  std::vector<ModelKind> models;
  std::vector<std::uint64_t> seeds;
  std::vector<CompareRun> runs;  // models outer, seeds inner

  Aggregate aggregate(ModelKind kind, std::size_t task) const;
};

/// Trains every (model, seed) pair on identical splits and scores the test
/// set. `jobs` > 1 runs independent trainings on worker threads; results
/// are identical to the sequential order.
CompareResults compare_models(const RunConfig& config,
                              const CascadeDataset& train_data,
                              const CascadeDataset& test_data,
                              std::size_t jobs);

/// `gen-data`: writes train.csv (+ test.csv when data.test_samples > 0)
/// and summary.json under out_dir. All writes are atomic.
void cmd_gen_data(const RunConfig& config, const std::string& out_dir);

/// `train`: one run per train.seeds entry; writes metrics.csv, a loss
/// curve and a checkpoint per seed under out_dir.
void cmd_train(const RunConfig& config, const std::string& out_dir);

/// `compare`: runs compare_models over compare.models and writes runs.csv,
/// summary.csv and table.txt under out_dir.
void cmd_compare(const RunConfig& config, const std::string& out_dir,
                 std::size_t jobs);

/// Maps a thrown error to the documented process exit code
/// (2 config, 3 data validation, 4 numeric, 1 anything else).
int exit_code_for_current_exception();

}  // namespace pimm
