#pragma once

// Run configuration: defaults, merging, and system construction from a
// registry name or a custom description with expression-valued fields.

#include <json.hpp>

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "pis/expr.hpp"
#include "pis/registry.hpp"

namespace pis {

using json = nlohmann::json;

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Schema of a run configuration; every default lives here.
inline const json& config_schema() {
  static const json schema = json::parse(R"({
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "title": "pis run configuration",
  "type": "object",
  "required": ["system"],
  "additionalProperties": false,
  "properties": {
    "system": {"type": "object", "description": "{\"registry\": name, \"params\": {...}, \"perturbation\": expr} or {\"custom\": {...}}"},
    "seed": {"type": "integer", "minimum": 0, "default": 7},
    "tolerance": {"type": "number", "exclusiveMinimum": 0, "default": 1e-9},
    "integrator": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "abs_tol": {"type": "number", "exclusiveMinimum": 0, "default": 1e-13},
        "rel_tol": {"type": "number", "minimum": 0, "default": 1e-13},
        "initial_step": {"type": "number", "exclusiveMinimum": 0, "default": 0.01},
        "max_steps": {"type": "integer", "minimum": 1, "default": 2000000}
      }
    },
    "validate": {
      "type": "object", "additionalProperties": false,
      "properties": {"points": {"type": "integer", "minimum": 1, "default": 100}}
    },
    "trivialize": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "closure_tol": {"type": "number", "exclusiveMinimum": 0, "default": 1e-10},
        "max_iterations": {"type": "integer", "minimum": 1, "default": 40},
        "straighten_points": {"type": "integer", "minimum": 1, "default": 5},
        "lattice_tol": {"type": "number", "exclusiveMinimum": 0, "default": 1e-8},
        "closure_check_tol": {"type": "number", "exclusiveMinimum": 0, "default": 1e-7}
      }
    },
    "recursion": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "points": {"type": "integer", "minimum": 1, "default": 50},
        "w_prime": {"type": ["string", "array"], "description": "\"drop_fiber_block\" or [row, column, expression] entries", "default": "drop_fiber_block"},
        "torsion_threshold": {"type": "number", "exclusiveMinimum": 0, "default": 1e-9}
      }
    },
    "actions": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "panels": {"type": "integer", "minimum": 2, "default": 32},
        "points": {"type": "integer", "minimum": 1, "default": 50},
        "canonical_tol": {"type": "number", "exclusiveMinimum": 0, "default": 1e-8},
        "quadrature_tol": {"type": "number", "exclusiveMinimum": 0, "default": 1e-7}
      }
    },
    "extend": {
      "type": "object", "additionalProperties": false,
      "properties": {"points": {"type": "integer", "minimum": 1, "default": 100}}
    },
    "measure": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "box": {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 2, "maxItems": 2, "items": {"type": "number"}},
                "default": [[1.0, 2.0], [1.0, 2.0]]},
        "gammas": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0},
                   "default": [1e-4, 1e-3, 1e-2, 1e-1]},
        "truncation": {"type": "integer", "minimum": 1, "default": 20},
        "samples": {"type": "integer", "minimum": 1, "default": 10000},
        "sampling": {"type": "string", "enum": ["grid", "random"], "default": "grid"}
      }
    },
    "kam_sweep": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "grid": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}, "default": [20, 20]},
        "z": {"type": "array", "items": {"type": "number"}, "default": []},
        "eps": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}, "default": [0.0, 1e-4, 1e-3, 1e-2]},
        "gamma": {"type": "number", "exclusiveMinimum": 0, "default": 1e-3},
        "truncation": {"type": "integer", "minimum": 1, "default": 30},
        "horizon": {"type": "number", "exclusiveMinimum": 0, "default": 1000.0},
        "samples": {"type": "integer", "minimum": 512, "default": 4096},
        "substeps": {"type": "integer", "minimum": 1, "default": 5},
        "drift_coefficient": {"type": "number", "exclusiveMinimum": 0, "default": 0.5},
        "residual_threshold": {"type": "number", "exclusiveMinimum": 0, "default": 1e-3}
      }
    }
  }
})");
  return schema;
}

namespace detail {

inline json schema_defaults(const json& schema) {
  if (schema.contains("default")) return schema["default"];
  json out = json::object();
  if (schema.contains("properties"))
    for (auto it = schema["properties"].begin(); it != schema["properties"].end(); ++it) {
      json d = schema_defaults(it.value());
      if (!d.is_null()) out[it.key()] = d;
    }
  return out.empty() ? json() : out;
}

inline bool has_type(const json& v, const std::string& t) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "boolean") return v.is_boolean();
  if (t == "integer") return v.is_number_integer();
  if (t == "number") return v.is_number();
  return false;
}

/// The schema subset used by config_schema(): type, required, properties,
/// additionalProperties, items, minItems, maxItems, minimum,
/// exclusiveMinimum, enum.
inline void check_schema(const json& schema, const json& v, const std::string& path) {
  const std::string where = path.empty() ? "top level" : "'" + path + "'";
  if (schema.contains("type")) {
    const json& t = schema["type"];
    bool ok = false;
    std::string names;
    for (const auto& e : t.is_array() ? t : json::array({t})) {
      ok = ok || has_type(v, e.get<std::string>());
      names += (names.empty() ? "" : " or ") + e.get<std::string>();
    }
    if (!ok) throw ConfigError("config: " + where + " must be " + names);
  }
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& e : schema["enum"]) found = found || e == v;
    if (!found) throw ConfigError("config: " + where + " must be one of " + schema["enum"].dump());
  }
  if (v.is_number()) {
    double x = v.get<double>();
    if (schema.contains("minimum") && x < schema["minimum"].get<double>())
      throw ConfigError("config: " + where + " must be >= " + schema["minimum"].dump());
    if (schema.contains("exclusiveMinimum") && !(x > schema["exclusiveMinimum"].get<double>()))
      throw ConfigError("config: " + where + " must be > " + schema["exclusiveMinimum"].dump());
  }
  if (v.is_array()) {
    if (schema.contains("minItems") && v.size() < schema["minItems"].get<std::size_t>())
      throw ConfigError("config: " + where + " needs at least " + schema["minItems"].dump() + " entries");
    if (schema.contains("maxItems") && v.size() > schema["maxItems"].get<std::size_t>())
      throw ConfigError("config: " + where + " allows at most " + schema["maxItems"].dump() + " entries");
    if (schema.contains("items"))
      for (std::size_t i = 0; i < v.size(); ++i) check_schema(schema["items"], v[i], path + "[" + std::to_string(i) + "]");
  }
  if (v.is_object()) {
    for (const auto& r : schema.value("required", json::array()))
      if (!v.contains(r.get<std::string>())) throw ConfigError("config: missing '" + r.get<std::string>() + "'");
    const json props = schema.value("properties", json::object());
    for (auto it = v.begin(); it != v.end(); ++it) {
      const std::string sub = path.empty() ? it.key() : path + "." + it.key();
      if (props.contains(it.key()))
        check_schema(props[it.key()], it.value(), sub);
      else if (!schema.value("additionalProperties", true))
        throw ConfigError("config: unknown key '" + sub + "'");
    }
  }
}

}  // namespace detail

/// Every tunable with its default, as declared in the schema.
inline json default_config() { return detail::schema_defaults(config_schema()); }

/// Defaults overlaid with the user document (objects merge recursively;
/// everything else replaces), checked against the schema.
inline json effective_config(const json& user) {
  if (!user.is_object()) throw ConfigError("config: top level must be an object");
  detail::check_schema(config_schema(), user, "");
  json cfg = default_config();
  cfg.merge_patch(user);
  detail::check_schema(config_schema(), cfg, "");
  return cfg;
}

inline json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string config_hash(const json& cfg) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(fnv1a(cfg.dump())));
  return buf;
}

namespace detail {

template <typename T>
T get_as(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError("config: missing '" + key + "' in " + where);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config: bad value for '" + key + "' in " + where + ": " + e.what());
  }
}

inline Eigen::VectorXd to_vector(const json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError("config: " + what + " must be an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError("config: " + what + " must be an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline std::vector<Eigen::VectorXd> to_vectors(const json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError("config: " + what + " must be an array of arrays");
  std::vector<Eigen::VectorXd> out;
  for (const auto& e : j) out.push_back(to_vector(e, what));
  return out;
}

inline std::vector<std::tuple<std::string, std::string, std::string>> antisym_entries(const json& j,
                                                                                     const std::string& what) {
  if (!j.is_array()) throw ConfigError("config: " + what + " must be a list of [row, column, expression]");
  std::vector<std::tuple<std::string, std::string, std::string>> out;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 3 || !e[0].is_string() || !e[1].is_string() ||
        !(e[2].is_string() || e[2].is_number()))
      throw ConfigError("config: " + what + " entries must be [row, column, expression]");
    std::string text = e[2].is_string() ? e[2].get<std::string>() : expr::format_number(e[2].get<double>());
    out.emplace_back(e[0].get<std::string>(), e[1].get<std::string>(), text);
  }
  return out;
}

inline std::vector<std::string> to_strings(const json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError("config: " + what + " must be a list of expressions");
  std::vector<std::string> out;
  for (const auto& e : j) {
    if (e.is_string())
      out.push_back(e.get<std::string>());
    else if (e.is_number())
      out.push_back(expr::format_number(e.get<double>()));
    else
      throw ConfigError("config: " + what + " must be a list of expressions");
  }
  return out;
}

inline ChartDomain domain_from_json(const json& d) {
  auto dim_base = get_as<std::size_t>(d, "dim_base", "domain");
  auto k = get_as<std::size_t>(d, "k", "domain");
  auto m = get_as<std::size_t>(d, "m", "domain");
  std::vector<Interval> bounds;
  for (const auto& b : d.value("bounds", json::array())) {
    if (!b.is_array() || b.size() != 2 || !b[0].is_number() || !b[1].is_number())
      throw ConfigError("config: domain bounds must be [lower, upper] pairs");
    bounds.push_back({b[0].get<double>(), b[1].get<double>()});
  }
  std::vector<std::string> names = d.value("names", std::vector<std::string>{});
  Interval box{-1.0, 1.0};
  if (d.contains("cylinder_box")) {
    auto v = to_vector(d["cylinder_box"], "cylinder_box");
    if (v.size() != 2) throw ConfigError("config: cylinder_box must be [lower, upper]");
    box = {v[0], v[1]};
  }
  return make_domain(dim_base, k, m, bounds, names, box);
}

inline BuiltSystem custom_system(const json& c) {
  BuiltSystem s;
  s.name = "custom";
  if (!c.contains("domain")) throw ConfigError("config: custom system needs a 'domain'");
  ChartDomain d = domain_from_json(c["domain"]);
  s.domain = d;
  s.toroidal = c.value("toroidal", true);

  if (!c.contains("poisson")) throw ConfigError("config: custom system needs 'poisson' entries");
  s.w = expr::parse_antisym<BivectorField>(antisym_entries(c["poisson"], "poisson"), d);

  if (c.contains("split")) {
    std::vector<std::size_t> idx;
    for (const auto& name : c["split"].get<std::vector<std::string>>()) {
      int i = d.index_of(name);
      if (i < 0) throw ConfigError("config: split names unknown coordinate '" + name + "'");
      idx.push_back(static_cast<std::size_t>(i));
    }
    s.split = make_split(d, idx);
  } else {
    s.split = leading_split(d);
  }

  if (c.contains("hamiltonians")) s.hamiltonians = detail::parse_all(to_strings(c["hamiltonians"], "hamiltonians"), d);
  s.algebra.domain = d;
  if (c.contains("generators")) {
    for (const auto& g : c["generators"]) s.algebra.generators.push_back(expr::parse_vector_field(to_strings(g, "generator"), d));
  } else {
    s.algebra.generators = detail::hamiltonian_fields(s.w, s.hamiltonians);
  }
  s.algebra.s_generators = c.contains("s_generators")
                               ? detail::parse_all(to_strings(c["s_generators"], "s_generators"), d)
                               : s.hamiltonians;
  if (c.contains("liouville")) {
    auto xi = detail::parse_all(to_strings(c["liouville"], "liouville"), d);
    if (xi.size() != d.dim()) throw ConfigError("config: liouville needs one coefficient per coordinate");
    s.liouville = xi;
  }
  if (c.contains("lattice_guesses")) s.lattice_guesses = to_vectors(c["lattice_guesses"], "lattice_guesses");
  if (c.contains("point")) {
    s.default_point = to_vector(c["point"], "point");
    if (static_cast<std::size_t>(s.default_point.size()) != d.dim())
      throw ConfigError("config: custom point must have dim Z entries");
  } else {
    s.default_point = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.dim()));
    for (std::size_t i = 0; i < d.dim_base(); ++i) s.default_point[static_cast<Eigen::Index>(i)] = d.base_bounds()[i].midpoint();
  }
  if (c.contains("kam")) {
    const auto& k = c["kam"];
    auto h = expr::parse(get_as<std::string>(k, "H", "kam"), d);
    auto h1 = expr::parse(k.value("H1", std::string("0")), d);
    bool action_free = true;
    for (std::size_t i = 0; i < d.k(); ++i) action_free = action_free && !expr::uses_variable(h1.root(), i);
    s.kam = make_kam_system(d, expr::to_field(h), expr::to_field(h1), 0.0, action_free);
  }
  return s;
}

}  // namespace detail

/// The system named by the config's "system" entry: either
/// {"registry": name, "params": {...}} or {"custom": {...}}.
inline BuiltSystem build_system(const json& system) {
  if (!system.is_object()) throw ConfigError("config: 'system' must be an object");
  if (system.contains("registry")) {
    RegistryParams p;
    const json params = system.value("params", json::object());
    if (!params.is_object()) throw ConfigError("config: registry 'params' must be an object");
    for (auto it = params.begin(); it != params.end(); ++it) {
      const std::string& key = it.key();
      const json& val = it.value();
      if (val.is_number())
        p[key] = {val.get<double>()};
      else if (val.is_array())
        p[key] = val.get<std::vector<double>>();
      else
        throw ConfigError("config: registry parameter '" + key + "' must be a number or list of numbers");
    }
    BuiltSystem s = registry(detail::get_as<std::string>(system, "registry", "system"), p);
    if (system.contains("perturbation")) {
      if (!s.kam) throw ConfigError("config: 'perturbation' applies only to systems on V x W x T^k");
      auto h1 = expr::parse(system["perturbation"].get<std::string>(), s.domain);
      bool action_free = true;
      for (std::size_t i = 0; i < s.domain.k(); ++i) action_free = action_free && !expr::uses_variable(h1.root(), i);
      s.kam = make_kam_system(s.domain, s.kam->H, expr::to_field(h1), 0.0, action_free);
    }
    return s;
  }
  if (system.contains("custom")) return detail::custom_system(system["custom"]);
  throw ConfigError("config: 'system' needs either 'registry' or 'custom'");
}

}  // namespace pis
