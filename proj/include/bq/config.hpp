#pragma once

#include "bq/spectral.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace bq {

// Flat key/value view of a TOML-style document: "[section]" headers prefix the
// keys ("grid.n"), values are numbers, booleans, quoted strings or arrays of numbers.
class KeyValueDoc {
 public:
  static KeyValueDoc parse(const std::string& text);
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string raw(const std::string& key) const;
  double number(const std::string& key, double fallback) const;
  std::int64_t integer(const std::string& key, std::int64_t fallback) const;
  bool boolean(const std::string& key, bool fallback) const;
  std::string string(const std::string& key, const std::string& fallback) const;
  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const;
  const std::map<std::string, std::string>& values() const { return values_; }
  void set(const std::string& key, const std::string& raw_value) { values_[key] = raw_value; }

 private:
  std::map<std::string, std::string> values_;
};

enum class ExperimentKind { simulate, lyapunov, control_demo, bracket_check, malliavin_probe, span_check, energy_audit };
std::string to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(const std::string& s);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::simulate;
  int n = 64;
  PhysicalParams params;
  double dt = 2.5e-3;
  double horizon = 1.0;
  double burn_in = 0.0;
  int ensemble = 1;
  std::uint64_t master_seed = 1;
  KeyValueDoc options;  // keys under [options]
  std::vector<std::string> warnings;

  GridSpec grid() const { return GridSpec::make(n); }
  double opt(const std::string& k, double fallback) const { return options.number(k, fallback); }
  std::int64_t opt_int(const std::string& k, std::int64_t fallback) const { return options.integer(k, fallback); }
  bool opt_bool(const std::string& k, bool fallback) const { return options.boolean(k, fallback); }
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
// Throws ConfigError; fills warnings.
void validate(ExperimentConfig& c);
// Canonical text of every field (defaults applied), independent of key order and formatting.
std::string canonical_text(const ExperimentConfig& c);
// FNV-1a 64 of the canonical text, as 16 hex digits.
std::string config_hash(const ExperimentConfig& c);

}  // namespace bq
