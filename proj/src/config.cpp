#include "pimm/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "pimm/error.hpp"

namespace pimm {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& value,
                                    const std::string& key) {
  std::vector<std::string> items;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) {
      throw ConfigError("empty list element in key " + key);
    }
    items.push_back(item);
  }
  if (items.empty()) {
    throw ConfigError("key " + key + " must be a non-empty list");
  }
  return items;
}

}  // namespace

const std::vector<ConfigKeyInfo>& RunConfig::registry() {
  static const std::vector<ConfigKeyInfo> keys = {
      {"data.num_samples", "50000", "tool",
       "training rows produced by gen-data"},
      {"data.test_samples", "10000", "tool",
       "held-out rows produced alongside the training split"},
      {"data.num_fields", "6", "tool", "number of categorical feature fields"},
      {"data.vocab_sizes", "40", "tool",
       "vocabulary size per field (single value or one per field)"},
      {"data.weight_scales", "1.2,0.25", "tool",
       "latent logit weight scale (single value or one per task)"},
      {"data.rates", "0.35,0.40", "tool",
       "conditional positive rate per task; defines the task count"},
      {"data.seed", "7", "tool", "synthetic generator seed"},
      {"data.train_path", std::nullopt, "tool",
       "training CSV consumed by train/compare"},
      {"data.test_path", std::nullopt, "tool",
       "test CSV; required by compare, optional for train"},
      {"data.fields", std::nullopt, "tool",
       "schema override for CSV ingestion: comma list of name:vocab "
       "(default: the generator layout c0:v,c1:v,...)"},
      {"data.tasks", std::nullopt, "tool",
       "schema override: task names in dependence order (default t0,t1,...)"},
      {"model.kind", "pimm", "tool", "pimm | shared_bottom | esmm | aitm"},
      {"model.embedding_dim", "5", "published", "embedding width per field"},
      {"model.tower_dims", "128,64,32", "published",
       "hidden sizes of each task tower; the last entry is the transfer "
       "width d"},
      {"model.bottom_dims", "64", "tool",
       "shared trunk sizes (shared_bottom only; 'none' disables)"},
      {"pim.alpha", std::nullopt, "published",
       "initial ground-truth sampling probability; required for pimm "
       "(published settings: 0.5 public, 2/3 industrial)"},
      {"pim.speed", std::nullopt, "published",
       "per-epoch decrease of the sampling probability; required for pimm "
       "(published settings: 0.25 public, 1/3 industrial)"},
      {"pim.beta", std::nullopt, "published",
       "lower limit of the sampling probability; required for pimm "
       "(published settings: 0.25 public, 0 industrial)"},
      {"train.learning_rate", "0.001", "published",
       "Adam learning rate (published sweep: 0.0005, 0.001, 0.0015, 0.002)"},
      {"train.batch_size", "256", "tool", "rows per training step"},
      {"train.max_epochs", "10", "tool",
       "largest epoch index E; training runs E = 0..max_epochs"},
      {"train.seeds", "1,2,3,4,5", "tool", "one training run per seed"},
      {"train.val_fraction", "0.1", "tool",
       "fraction of training rows held out for epoch selection"},
      {"compare.models", "shared_bottom,esmm,aitm,pimm", "tool",
       "model kinds the comparison harness trains"},
  };
  return keys;
}

std::string RunConfig::registry_help() {
  std::ostringstream out;
  out << "Configuration keys (config file sections [data], [model], [pim], "
         "[train], [compare];\noverride any key with --set section.key=value):"
      << "\n\n";
  std::size_t key_width = 0, default_width = 0;
  for (const auto& info : registry()) {
    key_width = std::max(key_width, info.key.size());
    default_width = std::max(
        default_width,
        info.default_value ? info.default_value->size() + 2 : 10);
  }
  for (const auto& info : registry()) {
    const std::string def =
        info.default_value ? "= " + *info.default_value : "(required)";
    out << "  " << info.key << std::string(key_width - info.key.size() + 2, ' ')
        << def << std::string(default_width - def.size() + 2, ' ') << "["
        << info.provenance << "] " << info.description << "\n";
  }
  return out.str();
}

const ConfigKeyInfo& RunConfig::info_for(const std::string& key) {
  for (const auto& info : registry()) {
    if (info.key == key) return info;
  }
  throw ConfigError("unknown config key: " + key);
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.is_open()) {
    throw ConfigError("cannot open config file: " + path);
  }
  RunConfig config;
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#' || stripped[0] == ';') {
      continue;
    }
    if (stripped.front() == '[') {
      if (stripped.back() != ']' || stripped.size() < 3) {
        throw ConfigError(path + ":" + std::to_string(line_no) +
                          ": malformed section header: " + stripped);
      }
      section = trim(stripped.substr(1, stripped.size() - 2));
      continue;
    }
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": expected key = value, got: " + stripped);
    }
    const std::string name = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (section.empty()) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": key " +
                        name + " appears before any [section]");
    }
    const std::string key = section + "." + name;
    info_for(key);  // rejects unknown keys
    if (config.values_.count(key)) {
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": duplicate key " + key);
    }
    config.values_[key] = value;
  }
  return config;
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override must look like section.key=value, got: " +
                      assignment);
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  info_for(key);
  values_[key] = value;
}

bool RunConfig::is_set(const std::string& key) const {
  return values_.count(key) > 0;
}

std::string RunConfig::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it != values_.end()) return it->second;
  const ConfigKeyInfo& info = info_for(key);
  if (info.default_value) return *info.default_value;
  throw ConfigError("missing required config key: " + key);
}

double RunConfig::get_double(const std::string& key) const {
  const std::string value = get_string(key);
  try {
    std::size_t pos = 0;
    // Accept simple fractions like 2/3 so the published schedule settings
    // can be written exactly.
    const auto slash = value.find('/');
    if (slash != std::string::npos) {
      const double num = std::stod(value.substr(0, slash), &pos);
      const double den = std::stod(value.substr(slash + 1));
      return num / den;
    }
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key " + key + " is not a number: \"" + value + "\"");
  }
}

std::size_t RunConfig::get_size(const std::string& key) const {
  return static_cast<std::size_t>(get_u64(key));
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string value = get_string(key);
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key " + key + " is not a non-negative integer: \"" +
                      value + "\"");
  }
}

std::vector<double> RunConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get_string(key), key)) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("key " + key + " has a non-numeric element: \"" +
                        item + "\"");
    }
  }
  return out;
}

std::vector<std::size_t> RunConfig::get_size_list(
    const std::string& key) const {
  std::vector<std::size_t> out;
  for (std::uint64_t v : get_u64_list(key)) {
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::vector<std::uint64_t> RunConfig::get_u64_list(
    const std::string& key) const {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(get_string(key), key)) {
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw ConfigError("key " + key + " has a non-integer element: \"" +
                        item + "\"");
    }
  }
  return out;
}

std::vector<std::string> RunConfig::get_string_list(
    const std::string& key) const {
  return split_list(get_string(key), key);
}

}  // namespace pimm
