#include "bq/config.hpp"

#include "bq/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace bq {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

double to_number(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
  }
  if (used != v.size()) throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
  return x;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

KeyValueDoc KeyValueDoc::parse(const std::string& text) {
  KeyValueDoc doc;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");
    const std::string full = section.empty() ? key : section + "." + key;
    if (doc.values_.count(full)) throw ConfigError("duplicate key '" + full + "'");
    doc.values_[full] = val;
  }
  return doc;
}

std::string KeyValueDoc::raw(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing key '" + key + "'");
  return it->second;
}

double KeyValueDoc::number(const std::string& key, double fallback) const {
  return has(key) ? to_number(key, raw(key)) : fallback;
}

std::int64_t KeyValueDoc::integer(const std::string& key, std::int64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string v = raw(key);
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size()) throw ConfigError("key '" + key + "' expects an integer, got '" + v + "'");
  return x;
}

bool KeyValueDoc::boolean(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = raw(key);
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("key '" + key + "' expects true or false, got '" + v + "'");
}

std::string KeyValueDoc::string(const std::string& key, const std::string& fallback) const {
  if (!has(key)) return fallback;
  const std::string v = raw(key);
  if (v.size() < 2 || v.front() != '"' || v.back() != '"')
    throw ConfigError("key '" + key + "' expects a quoted string, got '" + v + "'");
  return v.substr(1, v.size() - 2);
}

std::vector<double> KeyValueDoc::numbers(const std::string& key, std::vector<double> fallback) const {
  if (!has(key)) return fallback;
  const std::string v = raw(key);
  if (v.size() < 2 || v.front() != '[' || v.back() != ']')
    throw ConfigError("key '" + key + "' expects an array, got '" + v + "'");
  std::vector<double> out;
  std::istringstream in(v.substr(1, v.size() - 2));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_number(key, item));
  }
  return out;
}

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::simulate: return "simulate";
    case ExperimentKind::lyapunov: return "lyapunov";
    case ExperimentKind::control_demo: return "control-demo";
    case ExperimentKind::bracket_check: return "bracket-check";
    case ExperimentKind::malliavin_probe: return "malliavin-probe";
    case ExperimentKind::span_check: return "span-check";
    case ExperimentKind::energy_audit: return "energy-audit";
  }
  return "?";
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::simulate, ExperimentKind::lyapunov, ExperimentKind::control_demo,
                 ExperimentKind::bracket_check, ExperimentKind::malliavin_probe, ExperimentKind::span_check,
                 ExperimentKind::energy_audit})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown experiment kind '" + s + "'");
}

ExperimentConfig parse_config(const std::string& text) {
  const KeyValueDoc doc = KeyValueDoc::parse(text);
  static const std::vector<std::string> known = {"kind",        "grid.n",       "params.nu1",  "params.nu2",
                                                 "params.g",    "params.alpha", "run.dt",      "run.horizon",
                                                 "run.burn_in", "run.ensemble", "run.seed"};
  ExperimentConfig c;
  for (const auto& [k, v] : doc.values()) {
    if (k.rfind("options.", 0) == 0) {
      c.options.set(k.substr(8), v);
      continue;
    }
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown key '" + k + "'");
  }
  c.kind = experiment_kind_from_string(doc.string("kind", "simulate"));
  c.n = static_cast<int>(doc.integer("grid.n", c.n));
  c.params.nu1 = doc.number("params.nu1", c.params.nu1);
  c.params.nu2 = doc.number("params.nu2", c.params.nu2);
  c.params.g = doc.number("params.g", c.params.g);
  const auto a = doc.numbers("params.alpha", {c.params.alpha.begin(), c.params.alpha.end()});
  if (a.size() != 4) throw ConfigError("params.alpha needs exactly four amplitudes");
  std::copy(a.begin(), a.end(), c.params.alpha.begin());
  c.dt = doc.number("run.dt", c.dt);
  c.horizon = doc.number("run.horizon", c.horizon);
  c.burn_in = doc.number("run.burn_in", c.burn_in);
  c.ensemble = static_cast<int>(doc.integer("run.ensemble", c.ensemble));
  const std::int64_t seed = doc.integer("run.seed", 1);
  if (seed < 0) throw ConfigError("run.seed must be nonnegative");
  c.master_seed = static_cast<std::uint64_t>(seed);
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

void validate(ExperimentConfig& c) {
  if (c.n < 8 || c.n % 2 != 0) throw ConfigError("grid.n must be even and at least 8");
  try {
    c.params.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  if (!(c.dt > 0.0)) throw ConfigError("run.dt must be positive");
  if (!(c.horizon > 0.0)) throw ConfigError("run.horizon must be positive");
  if (!(c.burn_in >= 0.0)) throw ConfigError("run.burn_in must be nonnegative");
  if (c.ensemble < 1) throw ConfigError("run.ensemble must be at least 1");
  c.warnings.clear();
  if (c.params.kappa() < 2.0)
    c.warnings.push_back("kappa = " + fmt(c.params.kappa()) + " < 2: energy estimates use a weaker normalization");
}

std::string canonical_text(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "kind=" << to_string(c.kind) << "\n";
  o << "grid.n=" << c.n << "\n";
  o << "params.nu1=" << fmt(c.params.nu1) << "\nparams.nu2=" << fmt(c.params.nu2) << "\nparams.g=" << fmt(c.params.g)
    << "\n";
  for (int i = 0; i < 4; ++i) o << "params.alpha" << i << "=" << fmt(c.params.alpha[i]) << "\n";
  o << "run.dt=" << fmt(c.dt) << "\nrun.horizon=" << fmt(c.horizon) << "\nrun.burn_in=" << fmt(c.burn_in)
    << "\nrun.ensemble=" << c.ensemble << "\nrun.seed=" << c.master_seed << "\n";
  for (const auto& [k, v] : c.options.values()) o << "options." << k << "=" << v << "\n";
  return o.str();
}

std::string config_hash(const ExperimentConfig& c) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : canonical_text(c)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace bq
