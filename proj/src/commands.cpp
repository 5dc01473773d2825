#include "pimm/commands.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "pimm/checkpoint.hpp"
#include "pimm/error.hpp"

namespace pimm {

namespace {

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out.is_open()) {
      throw IoError("cannot write file: " + tmp);
    }
    out << content;
    if (!out.good()) {
      throw IoError("write failed for: " + tmp);
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw IoError("rename " + tmp + " -> " + path + ": " + ec.message());
  }
}

std::string format_auc(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10f", value);
  return buf;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create output directory " + dir + ": " +
                  ec.message());
  }
}

}  // namespace

DatasetSchema schema_from_config(const RunConfig& config) {
  DatasetSchema schema;
  if (config.is_set("data.fields")) {
    for (const auto& item : config.get_string_list("data.fields")) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) {
        throw ConfigError("data.fields entries must look like name:vocab, "
                          "got: " + item);
      }
      schema.field_names.push_back(item.substr(0, colon));
      try {
        schema.vocab_sizes.push_back(std::stoull(item.substr(colon + 1)));
      } catch (const std::exception&) {
        throw ConfigError("data.fields entry has a non-integer vocab: " +
                          item);
      }
    }
  } else {
    const std::size_t num_fields = config.get_size("data.num_fields");
    const auto vocab = config.get_size_list("data.vocab_sizes");
    if (vocab.size() != 1 && vocab.size() != num_fields) {
      throw ConfigError("data.vocab_sizes must have one entry or one per "
                        "field");
    }
    for (std::size_t i = 0; i < num_fields; ++i) {
      schema.field_names.push_back("c" + std::to_string(i));
      schema.vocab_sizes.push_back(vocab.size() == 1 ? vocab[0] : vocab[i]);
    }
  }
  if (config.is_set("data.tasks")) {
    schema.task_names = config.get_string_list("data.tasks");
  } else {
    const std::size_t num_tasks = config.get_double_list("data.rates").size();
    for (std::size_t t = 0; t < num_tasks; ++t) {
      schema.task_names.push_back("t" + std::to_string(t));
    }
  }
  schema.validate();
  return schema;
}

SyntheticConfig synthetic_config_from(const RunConfig& config) {
  SyntheticConfig synth;
  synth.num_samples = config.get_size("data.num_samples");
  synth.test_samples = config.get_size("data.test_samples");
  synth.num_fields = config.get_size("data.num_fields");
  synth.vocab_sizes = config.get_size_list("data.vocab_sizes");
  synth.weight_scales = config.get_double_list("data.weight_scales");
  synth.rates = config.get_double_list("data.rates");
  synth.seed = config.get_u64("data.seed");
  synth.validate();
  return synth;
}

ModelConfig model_config_from(const RunConfig& config,
                              const DatasetSchema& schema,
                              const std::string& kind) {
  ModelConfig model;
  model.kind = parse_model_kind(kind);
  model.num_tasks = schema.num_tasks();
  model.embedding_dim = config.get_size("model.embedding_dim");
  model.tower_dims = config.get_size_list("model.tower_dims");
  if (config.get_string("model.bottom_dims") == "none") {
    model.bottom_dims.clear();
  } else {
    model.bottom_dims = config.get_size_list("model.bottom_dims");
  }
  if (model.kind == ModelKind::kPimm) {
    model.schedule.alpha = config.get_double("pim.alpha");
    model.schedule.speed = config.get_double("pim.speed");
    model.schedule.beta = config.get_double("pim.beta");
  }
  model.validate(schema);
  return model;
}

TrainConfig train_config_from(const RunConfig& config) {
  TrainConfig train;
  train.learning_rate = config.get_double("train.learning_rate");
  train.batch_size = config.get_size("train.batch_size");
  train.max_epochs = config.get_size("train.max_epochs");
  train.val_fraction = config.get_double("train.val_fraction");
  train.seeds = config.get_u64_list("train.seeds");
  train.validate();
  return train;
}

Aggregate CompareResults::aggregate(ModelKind kind, std::size_t task) const {
  std::vector<double> values;
  for (const CompareRun& run : runs) {
    if (run.kind == kind) values.push_back(run.test_auc[task]);
  }
  return aggregate_runs(values);
}

CompareResults compare_models(const RunConfig& config,
                              const CascadeDataset& train_data,
                              const CascadeDataset& test_data,
                              std::size_t jobs) {
  const TrainConfig train_cfg = train_config_from(config);
  CompareResults results;
  results.task_names = train_data.schema().task_names;
  for (const auto& kind : config.get_string_list("compare.models")) {
    results.models.push_back(parse_model_kind(kind));
  }
  results.seeds = train_cfg.seeds;

  struct RunSpec {
    ModelKind kind;
    std::uint64_t seed;
  };
  std::vector<RunSpec> specs;
  for (ModelKind kind : results.models) {
    for (std::uint64_t seed : results.seeds) {
      specs.push_back({kind, seed});
    }
  }
  results.runs.resize(specs.size());

  // Model configs are resolved up front so config errors surface before
  // any training starts.
  std::vector<ModelConfig> model_cfgs;
  for (const RunSpec& spec : specs) {
    model_cfgs.push_back(model_config_from(config, train_data.schema(),
                                           model_kind_name(spec.kind)));
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= specs.size()) return;
      try {
        const RunSpec& spec = specs[i];
        auto [fit, val] =
            split_dataset(train_data, train_cfg.val_fraction, spec.seed);
        auto model = make_model(model_cfgs[i], train_data.schema(), spec.seed);
        train_loop(*model, train_cfg, fit, val, spec.seed);
        CompareRun run;
        run.kind = spec.kind;
        run.seed = spec.seed;
        run.test_auc = evaluate_auc(*model, test_data, train_cfg.batch_size);
        results.runs[i] = std::move(run);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const std::size_t workers =
      std::max<std::size_t>(1, std::min(jobs, specs.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

void cmd_gen_data(const RunConfig& config, const std::string& out_dir) {
  const SyntheticConfig synth = synthetic_config_from(config);
  ensure_dir(out_dir);
  const CascadeDataset all = generate_cascade(synth);

  std::vector<std::size_t> train_rows(synth.num_samples);
  for (std::size_t i = 0; i < synth.num_samples; ++i) train_rows[i] = i;
  const CascadeDataset train = all.subset(train_rows);

  const std::string train_path = out_dir + "/train.csv";
  save_csv_dataset(train, train_path);
  std::cout << "wrote " << train_path << " (" << train.num_rows() << " rows)\n";

  nlohmann::json summary;
  summary["train_rows"] = train.num_rows();
  summary["fields"] = all.schema().field_names;
  summary["vocab_sizes"] = all.schema().vocab_sizes;
  summary["tasks"] = all.schema().task_names;
  summary["configured_rates"] = synth.rates;

  std::vector<double> train_rates;
  for (std::size_t t = 0; t < all.schema().num_tasks(); ++t) {
    train_rates.push_back(train.positive_rate(t));
  }
  summary["empirical_rates_train"] = train_rates;

  if (synth.test_samples > 0) {
    std::vector<std::size_t> test_rows(synth.test_samples);
    for (std::size_t i = 0; i < synth.test_samples; ++i) {
      test_rows[i] = synth.num_samples + i;
    }
    const CascadeDataset test = all.subset(test_rows);
    const std::string test_path = out_dir + "/test.csv";
    save_csv_dataset(test, test_path);
    std::cout << "wrote " << test_path << " (" << test.num_rows()
              << " rows)\n";
    summary["test_rows"] = test.num_rows();
    std::vector<double> test_rates;
    for (std::size_t t = 0; t < all.schema().num_tasks(); ++t) {
      test_rates.push_back(test.positive_rate(t));
    }
    summary["empirical_rates_test"] = test_rates;
  }

  const std::string summary_path = out_dir + "/summary.json";
  write_file_atomic(summary_path, summary.dump(2) + "\n");
  std::cout << "wrote " << summary_path << "\n";
}

void cmd_train(const RunConfig& config, const std::string& out_dir) {
  const DatasetSchema schema = schema_from_config(config);
  LoadReport report;
  const CascadeDataset data =
      load_csv_dataset(config.get_string("data.train_path"), schema, &report);
  for (std::size_t i = 0; i < report.oov_per_field.size(); ++i) {
    if (report.oov_per_field[i] > 0) {
      std::cout << "note: field " << schema.field_names[i] << ": "
                << report.oov_per_field[i] << " out-of-vocabulary ids mapped "
                << "to 0\n";
    }
  }
  const bool has_test = config.is_set("data.test_path");
  std::optional<CascadeDataset> test;
  if (has_test) {
    test = load_csv_dataset(config.get_string("data.test_path"), schema);
  }

  const std::string kind = config.get_string("model.kind");
  const ModelConfig model_cfg = model_config_from(config, schema, kind);
  const TrainConfig train_cfg = train_config_from(config);
  ensure_dir(out_dir);

  std::ostringstream metrics;
  metrics << "model,task,seed,auc\n";
  for (std::uint64_t seed : train_cfg.seeds) {
    auto [fit, val] = split_dataset(data, train_cfg.val_fraction, seed);
    auto model = make_model(model_cfg, schema, seed);
    const TrainResult result = train_loop(*model, train_cfg, fit, val, seed);

    const std::vector<double> auc =
        has_test ? evaluate_auc(*model, *test, train_cfg.batch_size)
                 : result.val_auc;
    for (std::size_t t = 0; t < schema.num_tasks(); ++t) {
      metrics << kind << ',' << schema.task_names[t] << ',' << seed << ','
              << format_auc(auc[t]) << "\n";
    }

    std::ostringstream curve;
    curve << "epoch,loss\n";
    for (std::size_t e = 0; e < result.loss_curve.size(); ++e) {
      curve << e << ',' << format_auc(result.loss_curve[e]) << "\n";
    }
    const std::string curve_path =
        out_dir + "/loss_seed" + std::to_string(seed) + ".csv";
    write_file_atomic(curve_path, curve.str());

    const std::string ckpt_path =
        out_dir + "/checkpoint_seed" + std::to_string(seed) + ".bin";
    save_checkpoint(model->params(), ckpt_path);
    std::cout << "seed " << seed << ": selected epoch "
              << result.selected_epoch << ", wrote " << ckpt_path << " and "
              << curve_path << "\n";
  }
  const std::string metrics_path = out_dir + "/metrics.csv";
  write_file_atomic(metrics_path, metrics.str());
  std::cout << "wrote " << metrics_path << " ("
            << (has_test ? "test" : "validation") << " AUC)\n";
}

void cmd_compare(const RunConfig& config, const std::string& out_dir,
                 std::size_t jobs) {
  const DatasetSchema schema = schema_from_config(config);
  const CascadeDataset train_data =
      load_csv_dataset(config.get_string("data.train_path"), schema);
  const CascadeDataset test_data =
      load_csv_dataset(config.get_string("data.test_path"), schema);
  ensure_dir(out_dir);

  const CompareResults results =
      compare_models(config, train_data, test_data, jobs);

  std::ostringstream runs_csv;
  runs_csv << "model,task,seed,auc\n";
  for (const CompareRun& run : results.runs) {
    for (std::size_t t = 0; t < results.task_names.size(); ++t) {
      runs_csv << model_kind_name(run.kind) << ',' << results.task_names[t]
               << ',' << run.seed << ',' << format_auc(run.test_auc[t])
               << "\n";
    }
  }
  write_file_atomic(out_dir + "/runs.csv", runs_csv.str());

  std::ostringstream summary_csv;
  summary_csv << "model,task,mean,std\n";
  std::ostringstream table;
  table << "model          task        auc (mean ± std over "
        << results.seeds.size() << " seeds)\n";
  for (ModelKind kind : results.models) {
    for (std::size_t t = 0; t < results.task_names.size(); ++t) {
      const Aggregate agg = results.aggregate(kind, t);
      summary_csv << model_kind_name(kind) << ',' << results.task_names[t]
                  << ',' << format_auc(agg.mean) << ','
                  << format_auc(agg.stddev) << "\n";
      char line[128];
      std::snprintf(line, sizeof(line), "%-14s %-11s %s\n",
                    model_kind_name(kind), results.task_names[t].c_str(),
                    format_mean_std(agg).c_str());
      table << line;
    }
  }
  write_file_atomic(out_dir + "/summary.csv", summary_csv.str());
  write_file_atomic(out_dir + "/table.txt", table.str());
  std::cout << table.str();
  std::cout << "wrote " << out_dir << "/runs.csv, " << out_dir
            << "/summary.csv, " << out_dir << "/table.txt\n";
}

int exit_code_for_current_exception() {
  try {
    throw;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const ValueError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace pimm
