#pragma once

// TOML scenario files. Every key is checked against the documented schema and
// errors carry the dotted key path.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <toml.hpp>

#include "latmetric/experiments.hpp"

namespace latmetric {

/// Malformed or inconsistent scenario file; the message starts with the key.
class ConfigError : public InvalidArgument {
 public:
  ConfigError(const std::string& key, const std::string& why) : InvalidArgument(key + ": " + why), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

namespace detail {

inline const std::map<std::string, std::set<std::string>>& config_schema() {
  static const std::map<std::string, std::set<std::string>> schema{
      {"scenario", {"name", "kind"}},
      {"system", {"t", "U", "d", "n_up", "n_down", "filling"}},
      {"impurities", {"sites"}},
      {"grid", {"values", "start", "stop", "step"}},
      {"sampling", {"samples", "seed"}},
      {"solver",
       {"lanczos_tol", "lanczos_max_iter", "dense_threshold", "krylov_size", "max_dim", "ks_tol", "ks_max_iter",
        "ks_mixing", "inversion", "inversion_threshold", "inversion_keep", "inversion_max_iter", "inversion_max_d",
        "empty_floor", "threads"}},
      {"output", {"csv", "trace_dir"}},
  };
  return schema;
}

class TomlReader {
 public:
  explicit TomlReader(const toml::table& root) : root_(root) {}

  const toml::node* find(const std::string& section, const std::string& key) const {
    const auto* tbl = root_.get_as<toml::table>(section);
    return tbl ? tbl->get(key) : nullptr;
  }
  bool has(const std::string& section, const std::string& key) const { return find(section, key) != nullptr; }

  double number(const std::string& section, const std::string& key, double fallback) const {
    const auto* n = find(section, key);
    if (!n) return fallback;
    if (auto v = n->value<double>(); v && (n->is_floating_point() || n->is_integer())) return *v;
    throw ConfigError(section + "." + key, "expected a number");
  }

  std::int64_t integer(const std::string& section, const std::string& key, std::int64_t fallback) const {
    const auto* n = find(section, key);
    if (!n) return fallback;
    if (n->is_integer()) return *n->value<std::int64_t>();
    throw ConfigError(section + "." + key, "expected an integer");
  }

  bool boolean(const std::string& section, const std::string& key, bool fallback) const {
    const auto* n = find(section, key);
    if (!n) return fallback;
    if (n->is_boolean()) return *n->value<bool>();
    throw ConfigError(section + "." + key, "expected true or false");
  }

  std::string string(const std::string& section, const std::string& key, const std::string& fallback) const {
    const auto* n = find(section, key);
    if (!n) return fallback;
    if (n->is_string()) return *n->value<std::string>();
    throw ConfigError(section + "." + key, "expected a string");
  }

  /// A number or an array of numbers.
  std::vector<double> numbers(const std::string& section, const std::string& key) const {
    const auto* n = find(section, key);
    const std::string path = section + "." + key;
    if (!n) return {};
    if (n->is_integer() || n->is_floating_point()) return {*n->value<double>()};
    const auto* arr = n->as_array();
    if (!arr) throw ConfigError(path, "expected a number or an array of numbers");
    std::vector<double> out;
    for (const auto& el : *arr) {
      if (!(el.is_integer() || el.is_floating_point())) throw ConfigError(path, "array entries must be numbers");
      out.push_back(*el.value<double>());
    }
    return out;
  }

  std::vector<int> integers(const std::string& section, const std::string& key) const {
    const auto* n = find(section, key);
    const std::string path = section + "." + key;
    if (!n) return {};
    const auto* arr = n->as_array();
    if (!arr) throw ConfigError(path, "expected an array of integers");
    std::vector<int> out;
    for (const auto& el : *arr) {
      if (!el.is_integer()) throw ConfigError(path, "array entries must be integers");
      out.push_back(static_cast<int>(*el.value<std::int64_t>()));
    }
    return out;
  }

 private:
  const toml::table& root_;
};

inline void check_keys(const toml::table& root) {
  const auto& schema = config_schema();
  for (const auto& [k, node] : root) {
    const std::string section(k.str());
    const auto it = schema.find(section);
    if (it == schema.end()) throw ConfigError(section, "unknown section");
    const auto* tbl = node.as_table();
    if (!tbl) throw ConfigError(section, "expected a table");
    for (const auto& [key, _] : *tbl)
      if (!it->second.count(std::string(key.str())))
        throw ConfigError(section + "." + std::string(key.str()), "unknown key");
  }
}

/// start, start + step, ... up to stop (inclusive within 1e-9 steps).
inline std::vector<double> arithmetic_grid(double start, double stop, double step) {
  if (!(step > 0.0)) throw ConfigError("grid.step", "must be > 0");
  if (!(stop >= start)) throw ConfigError("grid.stop", "must be >= grid.start");
  const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  if (count > 1'000'000) throw ConfigError("grid.step", "grid would hold more than 10^6 points");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    // snap to 12 significant digits so 0.1 + 2*0.05 prints as 0.2
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", start + static_cast<double>(i) * step);
    out[i] = std::strtod(buf, nullptr);
  }
  return out;
}

inline ScenarioKind parse_kind(const std::string& s) {
  if (s == "homogeneous") return ScenarioKind::homogeneous;
  if (s == "impurities") return ScenarioKind::impurities;
  if (s == "harmonic") return ScenarioKind::harmonic;
  if (s == "random-sample") return ScenarioKind::random_sample;
  throw ConfigError("scenario.kind", "expected homogeneous, impurities, harmonic or random-sample, got '" + s + "'");
}

}  // namespace detail

/// Builds a ScenarioConfig from parsed TOML and validates it.
inline ScenarioConfig config_from_toml(const toml::table& root, const std::string& default_name = "scenario") {
  detail::check_keys(root);
  const detail::TomlReader r(root);
  ScenarioConfig c;

  if (!r.has("scenario", "kind")) throw ConfigError("scenario.kind", "missing");
  c.kind = detail::parse_kind(r.string("scenario", "kind", ""));
  c.name = r.string("scenario", "name", default_name);
  if (c.name.empty() || c.name.find_first_of(",\n\"") != std::string::npos)
    throw ConfigError("scenario.name", "must be non-empty without commas, quotes or newlines");

  c.t = r.number("system", "t", 1.0);
  if (r.has("system", "U")) c.U = r.numbers("system", "U");
  const bool per_row_sector = c.kind == ScenarioKind::homogeneous || c.kind == ScenarioKind::random_sample;
  for (const char* key : {"d", "n_up", "n_down"}) {
    if (per_row_sector && r.has("system", key))
      throw ConfigError(std::string("system.") + key, "not used by " + to_string(c.kind) +
                                                          " scenarios (chain size comes from the grid)");
    if (!per_row_sector && !r.has("system", key))
      throw ConfigError(std::string("system.") + key, "missing");
  }
  if (!per_row_sector && r.has("system", "filling"))
    throw ConfigError("system.filling", "only used by homogeneous and random-sample scenarios");
  c.d = static_cast<int>(r.integer("system", "d", 0));
  c.n_up = static_cast<int>(r.integer("system", "n_up", 0));
  c.n_down = static_cast<int>(r.integer("system", "n_down", 0));
  c.filling = r.number("system", "filling", 0.5);

  if (root.contains("impurities") && c.kind != ScenarioKind::impurities)
    throw ConfigError("impurities", "only used by impurities scenarios");
  if (c.kind == ScenarioKind::impurities) {
    if (!r.has("impurities", "sites")) throw ConfigError("impurities.sites", "missing");
    c.impurity_sites = r.integers("impurities", "sites");
  }

  const bool listed = r.has("grid", "values");
  const bool ranged = r.has("grid", "start") || r.has("grid", "stop") || r.has("grid", "step");
  if (listed && ranged) throw ConfigError("grid.values", "give either values or start/stop/step, not both");
  if (listed) {
    c.grid = r.numbers("grid", "values");
  } else if (ranged) {
    for (const char* key : {"start", "stop", "step"})
      if (!r.has("grid", key)) throw ConfigError(std::string("grid.") + key, "missing");
    c.grid = detail::arithmetic_grid(r.number("grid", "start", 0), r.number("grid", "stop", 0),
                                     r.number("grid", "step", 0));
  } else {
    throw ConfigError("grid.values", "missing");
  }

  if (root.contains("sampling") && c.kind != ScenarioKind::random_sample)
    throw ConfigError("sampling", "only used by random-sample scenarios");
  const auto samples = r.integer("sampling", "samples", 1000);
  if (samples < 1) throw ConfigError("sampling.samples", "must be >= 1");
  c.samples = static_cast<std::size_t>(samples);
  const auto seed = r.integer("sampling", "seed", 1);
  if (seed < 0) throw ConfigError("sampling.seed", "must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);

  auto& s = c.solver;
  s.eigen.tol = r.number("solver", "lanczos_tol", s.eigen.tol);
  s.eigen.max_iter = static_cast<int>(r.integer("solver", "lanczos_max_iter", s.eigen.max_iter));
  s.eigen.dense_threshold = static_cast<std::size_t>(
      r.integer("solver", "dense_threshold", static_cast<std::int64_t>(s.eigen.dense_threshold)));
  s.eigen.krylov_size = static_cast<int>(r.integer("solver", "krylov_size", s.eigen.krylov_size));
  const auto max_dim = r.integer("solver", "max_dim", static_cast<std::int64_t>(s.build.max_dimension));
  if (max_dim < 1) throw ConfigError("solver.max_dim", "must be >= 1");
  s.build.max_dimension = static_cast<std::size_t>(max_dim);
  s.ks.tol = r.number("solver", "ks_tol", s.ks.tol);
  s.ks.max_iter = static_cast<int>(r.integer("solver", "ks_max_iter", s.ks.max_iter));
  s.ks.mixing = r.number("solver", "ks_mixing", s.ks.mixing);
  s.run_inversion = r.boolean("solver", "inversion", s.run_inversion);
  s.inversion.threshold = r.number("solver", "inversion_threshold", s.inversion.threshold);
  s.inversion.keep_fraction = r.number("solver", "inversion_keep", s.inversion.keep_fraction);
  s.inversion.max_iter = static_cast<int>(r.integer("solver", "inversion_max_iter", s.inversion.max_iter));
  s.inversion_max_d = static_cast<int>(r.integer("solver", "inversion_max_d", s.inversion_max_d));
  s.inversion.empty_floor = r.number("solver", "empty_floor", s.inversion.empty_floor);
  s.inversion.eigen.tol = s.eigen.tol;
  const auto threads = r.integer("solver", "threads", 1);
  if (threads < 1 || threads > 1024) throw ConfigError("solver.threads", "must lie in [1, 1024]");
  c.threads = static_cast<unsigned>(threads);

  auto positive = [&](const char* key, double x) {
    if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError(std::string("solver.") + key, "must be > 0");
  };
  positive("lanczos_tol", s.eigen.tol);
  positive("lanczos_max_iter", s.eigen.max_iter);
  positive("krylov_size", s.eigen.krylov_size);
  positive("ks_tol", s.ks.tol);
  positive("ks_max_iter", s.ks.max_iter);
  positive("inversion_threshold", s.inversion.threshold);
  positive("inversion_max_iter", s.inversion.max_iter);
  positive("empty_floor", s.inversion.empty_floor);
  if (!(s.ks.mixing > 0.0 && s.ks.mixing <= 1.0)) throw ConfigError("solver.ks_mixing", "must lie in (0, 1]");
  if (!(s.inversion.keep_fraction >= 0.0 && s.inversion.keep_fraction < 1.0))
    throw ConfigError("solver.inversion_keep", "must lie in [0, 1)");

  c.output = r.string("output", "csv", "");
  s.trace_dir = r.string("output", "trace_dir", "");

  validate(c);
  return c;
}

inline ScenarioConfig parse_config_string(std::string_view text, const std::string& default_name = "scenario") {
  try {
    return config_from_toml(toml::parse(text), default_name);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "line " << e.source().begin.line << ": " << e.description();
    throw ConfigError("syntax", os.str());
  }
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_string(ss.str(), path.stem().string());
}

}  // namespace latmetric
