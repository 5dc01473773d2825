#include "pimm/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pimm/error.hpp"
#include "pimm/rng.hpp"

namespace pimm {

void DatasetSchema::validate() const {
  if (field_names.size() != vocab_sizes.size()) {
    throw ConfigError("schema: " + std::to_string(field_names.size()) +
                      " field names but " + std::to_string(vocab_sizes.size()) +
                      " vocab sizes");
  }
  if (field_names.empty()) {
    throw ConfigError("schema: at least one feature field required");
  }
  if (task_names.size() < 2) {
    throw ConfigError("schema: at least two tasks required, got " +
                      std::to_string(task_names.size()));
  }
  for (std::size_t v : vocab_sizes) {
    if (v < 2) {
      throw ConfigError("schema: vocab sizes must be >= 2, got " +
                        std::to_string(v));
    }
  }
}

CascadeDataset::CascadeDataset(DatasetSchema schema,
                               std::vector<std::uint32_t> features,
                               std::vector<std::uint8_t> labels)
    : schema_(std::move(schema)) {
  schema_.validate();
  const std::size_t f = schema_.num_fields();
  const std::size_t m = schema_.num_tasks();
  if (features.size() % f != 0 || labels.size() % m != 0 ||
      features.size() / f != labels.size() / m) {
    throw DataError("dataset: feature/label row counts disagree");
  }
  num_rows_ = features.size() / f;
  features_ = std::move(features);
  labels_ = std::move(labels);
}

double CascadeDataset::positive_rate(std::size_t task) const {
  if (num_rows_ == 0) return 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < num_rows_; ++r) count += label(r, task);
  return static_cast<double>(count) / static_cast<double>(num_rows_);
}

CascadeDataset CascadeDataset::subset(
    const std::vector<std::size_t>& rows) const {
  const std::size_t f = schema_.num_fields();
  const std::size_t m = schema_.num_tasks();
  std::vector<std::uint32_t> feats;
  std::vector<std::uint8_t> labs;
  feats.reserve(rows.size() * f);
  labs.reserve(rows.size() * m);
  for (std::size_t r : rows) {
    for (std::size_t i = 0; i < f; ++i) feats.push_back(feature(r, i));
    for (std::size_t t = 0; t < m; ++t) labs.push_back(label(r, t));
  }
  return CascadeDataset(schema_, std::move(feats), std::move(labs));
}

void SyntheticConfig::validate() const {
  if (num_samples == 0) throw ConfigError("data.num_samples must be positive");
  if (num_fields == 0) throw ConfigError("data.num_fields must be positive");
  if (rates.size() < 2) {
    throw ConfigError("data.rates needs one rate per task (at least two)");
  }
  for (double r : rates) {
    if (!(r >= 0.0 && r <= 1.0)) {
      throw ConfigError("data.rates entries must lie in [0, 1]");
    }
  }
  if (vocab_sizes.size() != 1 && vocab_sizes.size() != num_fields) {
    throw ConfigError("data.vocab_sizes must have one entry or one per field");
  }
  for (std::size_t v : vocab_sizes) {
    if (v < 2) throw ConfigError("data.vocab_sizes entries must be >= 2");
  }
  if (weight_scales.size() != 1 && weight_scales.size() != rates.size()) {
    throw ConfigError("data.weight_scales must have one entry or one per task");
  }
  for (double s : weight_scales) {
    if (!(s > 0.0)) throw ConfigError("data.weight_scales must be positive");
  }
}

namespace {

// Intercept b with mean(sigmoid(logit + b)) == target over the given
// logits, found by bisection; the mean is monotone in b.
double calibrate_intercept(const std::vector<double>& logits, double target) {
  auto mean_prob = [&logits](double b) {
    double s = 0.0;
    for (double l : logits) s += 1.0 / (1.0 + std::exp(-(l + b)));
    return s / static_cast<double>(logits.size());
  };
  double lo = -50.0, hi = 50.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mean_prob(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

CascadeDataset generate_cascade(const SyntheticConfig& config) {
  config.validate();
  const std::size_t n = config.num_samples + config.test_samples;
  const std::size_t f = config.num_fields;
  const std::size_t m = config.rates.size();

  auto vocab_of = [&config](std::size_t field) {
    return config.vocab_sizes.size() == 1 ? config.vocab_sizes[0]
                                          : config.vocab_sizes[field];
  };
  auto scale_of = [&config](std::size_t task) {
    return config.weight_scales.size() == 1 ? config.weight_scales[0]
                                            : config.weight_scales[task];
  };

  DatasetSchema schema;
  for (std::size_t i = 0; i < f; ++i) {
    schema.field_names.push_back("c" + std::to_string(i));
    schema.vocab_sizes.push_back(vocab_of(i));
  }
  for (std::size_t t = 0; t < m; ++t) {
    schema.task_names.push_back("t" + std::to_string(t));
  }

  // Fixed draw order: latent weights, then ids, then label noise, so the
  // whole dataset is a pure function of the seed.
  Rng weight_rng = Rng::derive(config.seed, 0xfeed);
  std::vector<std::vector<double>> weights(m);  // per task, over all vocab slots
  std::size_t total_vocab = 0;
  for (std::size_t i = 0; i < f; ++i) total_vocab += vocab_of(i);
  for (std::size_t t = 0; t < m; ++t) {
    weights[t].resize(total_vocab);
    for (double& w : weights[t]) w = weight_rng.normal(0.0, scale_of(t));
  }

  Rng id_rng = Rng::derive(config.seed, 0x1d5);
  std::vector<std::uint32_t> features(n * f);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < f; ++i) {
      features[r * f + i] =
          static_cast<std::uint32_t>(id_rng.below(vocab_of(i)));
    }
  }

  // logit_t(x) = own linear term + logit_{t-1}(x): downstream tasks share
  // the upstream signal, which is what makes transfer modeling pay off.
  std::vector<std::vector<double>> logits(m, std::vector<double>(n, 0.0));
  for (std::size_t t = 0; t < m; ++t) {
    for (std::size_t r = 0; r < n; ++r) {
      double l = t > 0 ? logits[t - 1][r] : 0.0;
      std::size_t offset = 0;
      for (std::size_t i = 0; i < f; ++i) {
        l += weights[t][offset + features[r * f + i]];
        offset += vocab_of(i);
      }
      logits[t][r] = l;
    }
  }

  Rng label_rng = Rng::derive(config.seed, 0x1ab);
  std::vector<std::uint8_t> labels(n * m, 0);
  std::vector<std::uint8_t> eligible(n, 1);
  for (std::size_t t = 0; t < m; ++t) {
    const double rate = config.rates[t];
    double intercept = 0.0;
    if (rate > 0.0 && rate < 1.0) {
      std::vector<double> pool;
      pool.reserve(n);
      for (std::size_t r = 0; r < n; ++r) {
        if (eligible[r]) pool.push_back(logits[t][r]);
      }
      if (!pool.empty()) intercept = calibrate_intercept(pool, rate);
    }
    for (std::size_t r = 0; r < n; ++r) {
      const double u = label_rng.uniform();  // one draw per row, always
      if (!eligible[r]) continue;
      std::uint8_t y;
      if (rate <= 0.0) {
        y = 0;
      } else if (rate >= 1.0) {
        y = 1;
      } else {
        const double p = 1.0 / (1.0 + std::exp(-(logits[t][r] + intercept)));
        y = u < p ? 1 : 0;
      }
      labels[r * m + t] = y;
      if (!y) eligible[r] = 0;
    }
  }

  return CascadeDataset(std::move(schema), std::move(features),
                        std::move(labels));
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

}  // namespace

CascadeDataset load_csv_dataset(const std::string& path,
                                const DatasetSchema& schema,
                                LoadReport* report) {
  schema.validate();
  std::ifstream in(path);
  if (!in.is_open()) {
    throw IoError("cannot open dataset file: " + path);
  }
  const std::size_t f = schema.num_fields();
  const std::size_t m = schema.num_tasks();

  std::string line;
  if (!std::getline(in, line)) {
    throw DataError(path + ": missing header row");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> expected;
  for (const auto& name : schema.field_names) expected.push_back("f_" + name);
  for (const auto& name : schema.task_names) expected.push_back("y_" + name);
  const std::vector<std::string> header = split_line(line);
  if (header != expected) {
    std::string want;
    for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
    throw DataError(path + ": header does not match schema (expected \"" +
                    want + "\", got \"" + line + "\")");
  }

  LoadReport rep;
  rep.oov_per_field.assign(f, 0);
  std::vector<std::uint32_t> features;
  std::vector<std::uint8_t> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != f + m) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(f + m) + " columns, got " +
                      std::to_string(cells.size()));
    }
    for (std::size_t i = 0; i < f; ++i) {
      unsigned long long id;
      try {
        std::size_t pos = 0;
        id = std::stoull(cells[i], &pos);
        if (pos != cells[i].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": feature column " + schema.field_names[i] +
                        " is not a non-negative integer: \"" + cells[i] +
                        "\"");
      }
      if (id >= schema.vocab_sizes[i]) {
        id = 0;
        ++rep.oov_per_field[i];
      }
      features.push_back(static_cast<std::uint32_t>(id));
    }
    std::vector<std::uint8_t> row_labels(m);
    for (std::size_t t = 0; t < m; ++t) {
      const std::string& cell = cells[f + t];
      if (cell == "0") {
        row_labels[t] = 0;
      } else if (cell == "1") {
        row_labels[t] = 1;
      } else {
        throw DataError(path + ":" + std::to_string(line_no) + ": label " +
                        schema.task_names[t] + " must be 0 or 1, got \"" +
                        cell + "\"");
      }
    }
    for (std::size_t t = 0; t + 1 < m; ++t) {
      if (row_labels[t] == 0 && row_labels[t + 1] == 1) {
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": row violates the dependence constraint: (" +
                        schema.task_names[t] + "=0, " +
                        schema.task_names[t + 1] + "=1)");
      }
    }
    labels.insert(labels.end(), row_labels.begin(), row_labels.end());
  }
  rep.rows = labels.size() / m;
  if (report != nullptr) *report = rep;
  return CascadeDataset(schema, std::move(features), std::move(labels));
}

void save_csv_dataset(const CascadeDataset& dataset, const std::string& path) {
  const DatasetSchema& schema = dataset.schema();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out.is_open()) {
      throw IoError("cannot write dataset file: " + tmp);
    }
    std::string header;
    for (const auto& name : schema.field_names) {
      header += (header.empty() ? "" : ",") + ("f_" + name);
    }
    for (const auto& name : schema.task_names) header += ",y_" + name;
    out << header << "\n";
    for (std::size_t r = 0; r < dataset.num_rows(); ++r) {
      for (std::size_t i = 0; i < schema.num_fields(); ++i) {
        if (i) out << ',';
        out << dataset.feature(r, i);
      }
      for (std::size_t t = 0; t < schema.num_tasks(); ++t) {
        out << ',' << static_cast<int>(dataset.label(r, t));
      }
      out << "\n";
    }
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

std::pair<CascadeDataset, CascadeDataset> split_dataset(
    const CascadeDataset& dataset, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw ConfigError("split fraction must lie in [0, 1)");
  }
  std::vector<std::size_t> order(dataset.num_rows());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::derive(seed, 0x5b117);
  rng.shuffle(order);
  const std::size_t second =
      static_cast<std::size_t>(std::llround(fraction * order.size()));
  const std::size_t first = order.size() - second;
  std::vector<std::size_t> a(order.begin(), order.begin() + first);
  std::vector<std::size_t> b(order.begin() + first, order.end());
  return {dataset.subset(a), dataset.subset(b)};
}

Batch make_batch(const CascadeDataset& dataset,
                 const std::vector<std::size_t>& rows, bool with_labels) {
  const std::size_t f = dataset.schema().num_fields();
  const std::size_t m = dataset.schema().num_tasks();
  Batch batch;
  batch.size = rows.size();
  batch.num_fields = f;
  batch.features.reserve(rows.size() * f);
  for (std::size_t r : rows) {
    for (std::size_t i = 0; i < f; ++i) {
      batch.features.push_back(dataset.feature(r, i));
    }
  }
  if (with_labels) {
    Array labels(rows.size(), m);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t t = 0; t < m; ++t) {
        labels.at(i, t) = dataset.label(rows[i], t);
      }
    }
    batch.labels = std::move(labels);
    batch.has_labels = true;
  }
  return batch;
}

BatchIterator::BatchIterator(const CascadeDataset& dataset,
                             std::size_t batch_size, std::uint64_t seed)
    : dataset_(dataset), batch_size_(batch_size), seed_(seed) {
  if (batch_size == 0) {
    throw ConfigError("batch size must be >= 1");
  }
}

std::vector<std::vector<std::size_t>> BatchIterator::epoch_indices(
    std::size_t epoch_index) const {
  std::vector<std::size_t> order(dataset_.num_rows());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::derive(seed_ + epoch_index, 0xba7c4);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size_) {
    const std::size_t end = std::min(start + batch_size_, order.size());
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

std::vector<Batch> BatchIterator::epoch(std::size_t epoch_index) const {
  std::vector<Batch> batches;
  for (const auto& rows : epoch_indices(epoch_index)) {
    batches.push_back(make_batch(dataset_, rows, true));
  }
  return batches;
}

}  // namespace pimm
