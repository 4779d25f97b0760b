#ifndef DRL_CONFIG_HPP
#define DRL_CONFIG_HPP

#include <map>
#include <string>
#include <vector>

#include "drl/training.hpp"

namespace drl {

/// Flat "section.key" -> raw string view of a TOML-style config file
/// (sections, key = value lines, # comments). Flags override file values.
class ConfigMap {
 public:
  static ConfigMap from_file(const std::string& path);
  static ConfigMap from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  /// Parses "section.key=value" (the --set flag form).
  void apply_override(const std::string& assignment);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  /// Keys never read by any getter; used to reject misspelled fields.
  std::vector<std::string> unread_keys() const;

 private:
  std::map<std::string, std::string> entries_;
  mutable std::map<std::string, bool> read_;
};

/// Builds and validates a TrainConfig; rejects unknown keys with a
/// field-level message.
TrainConfig train_config_from(const ConfigMap& cfg);

/// Sets every seed (episodes, dataset, init) in one place.
TrainConfig with_seed(TrainConfig cfg, std::uint64_t seed);

/// FNV-1a hash of the canonical key=value dump, as hex.
std::string config_content_hash(const ConfigMap& cfg);

/// Shortest round-trip decimal formatting (CSV and manifest output).
std::string format_double(double v);

}  // namespace drl

#endif  // DRL_CONFIG_HPP
