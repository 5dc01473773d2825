#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pimm {

/// One registered configuration key. Keys are "section.name"; the config
/// file groups them under [section] headings. `default_value` empty-optional
/// means the key must be set explicitly wherever a command needs it.
struct ConfigKeyInfo {
  std::string key;
  std::optional<std::string> default_value;
  std::string provenance;  // "published" for defaults taken from the
                           // original experiments, "tool" otherwise
  std::string description;
};

/// Flat sectioned key=value configuration with a closed key set.
///
/// File syntax:
///   # comment
///   [section]
///   key = value
///
/// Unknown keys are rejected, duplicates too (parsing must be
/// order-independent). Command-line overrides ("section.key=value") replace
/// file values.
class RunConfig {
 public:
  static const std::vector<ConfigKeyInfo>& registry();

  /// Aligned help text for every key (default + provenance).
  static std::string registry_help();

  static RunConfig from_file(const std::string& path);

  /// Empty config (registry defaults only).
  RunConfig() = default;

  void apply_override(const std::string& assignment);  // "a.b=c"
  void set(const std::string& key, const std::string& value);

  bool is_set(const std::string& key) const;

  /// Value of the key, falling back to its registry default; throws
  /// ConfigError naming the key when neither exists.
  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<std::size_t> get_size_list(const std::string& key) const;
  std::vector<std::uint64_t> get_u64_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

 private:
  static const ConfigKeyInfo& info_for(const std::string& key);
  std::map<std::string, std::string> values_;
};

}  // namespace pimm
