#pragma once

// Run configuration: a YAML mapping of sections to keys, every value carrying
// an explicit unit where it has a dimension.
//
//   material:
//     E: 4000 kPa
//     rho: 1200 kg/m3
//   data:
//     train: [runs/data/poke-0]
//
// The schema fixes each key's kind. Unknown sections or keys, missing or
// foreign units and malformed values are rejected. Values are held in SI
// and serialize in the first (SI) unit of their family, so parse ->
// serialize -> parse is the identity. Requires yaml-cpp.

#include "dpsi/core.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace dpsi {

enum class ValueKind { Pressure, Length, Time, Density, Acceleration, Volume, Scalar, Integer, Text, Flag, List };

struct KeySpec {
  std::string key;  // "section.name"
  ValueKind kind;
  std::string default_value;  // as it would be written in a file; lists comma-separated
};

namespace detail {

struct UnitFactor {
  const char* name;
  double factor;
};

inline std::vector<UnitFactor> units_of(ValueKind k) {
  switch (k) {
    case ValueKind::Pressure: return {{"Pa", 1.0}, {"kPa", 1e3}, {"MPa", 1e6}, {"GPa", 1e9}};
    case ValueKind::Length: return {{"m", 1.0}, {"cm", 1e-2}, {"mm", 1e-3}};
    case ValueKind::Time: return {{"s", 1.0}, {"ms", 1e-3}};
    case ValueKind::Density: return {{"kg/m3", 1.0}, {"g/cm3", 1e3}};
    case ValueKind::Acceleration: return {{"m/s2", 1.0}};
    case ValueKind::Volume: return {{"m3", 1.0}, {"cm3", 1e-6}, {"mm3", 1e-9}};
    default: return {};
  }
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t b = 0;
  while (b <= s.size()) {
    const auto e = s.find(',', b);
    const std::string item = trim(s.substr(b, e == std::string::npos ? std::string::npos : e - b));
    if (!item.empty()) out.push_back(item);
    if (e == std::string::npos) break;
    b = e + 1;
  }
  return out;
}

}  // namespace detail

class Config {
 public:
  explicit Config(std::vector<KeySpec> schema) : schema_(std::move(schema)) {
    for (const KeySpec& k : schema_) {
      if (k.key.find('.') == std::string::npos) throw ConfigError("schema key '" + k.key + "' has no section");
      if (k.kind == ValueKind::List)
        values_[k.key] = detail::split_list(k.default_value);
      else
        set(k.key, k.default_value);
    }
  }

  /// Parses YAML `text` on top of the schema defaults.
  static Config parse(const std::string& text, std::vector<KeySpec> schema) {
    Config c(std::move(schema));
    YAML::Node root;
    try {
      root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
      throw ConfigError(std::string("malformed config: ") + e.what());
    }
    if (root.IsNull()) return c;
    if (!root.IsMap()) throw ConfigError("config must be a mapping of sections");
    for (const auto& sec : root) {
      const std::string section = sec.first.as<std::string>();
      if (!sec.second.IsMap()) throw ConfigError("section '" + section + "' must be a mapping");
      for (const auto& kv : sec.second) {
        const std::string key = section + "." + kv.first.as<std::string>();
        const KeySpec& spec = c.find(key);
        if (spec.kind == ValueKind::List) {
          std::vector<std::string> items;
          if (kv.second.IsSequence()) {
            for (const auto& it : kv.second) {
              if (!it.IsScalar()) throw ConfigError("key '" + key + "': list items must be scalars");
              items.push_back(it.as<std::string>());
            }
          } else if (kv.second.IsScalar()) {
            items = detail::split_list(kv.second.as<std::string>());
          } else if (!kv.second.IsNull()) {
            throw ConfigError("key '" + key + "': expected a list");
          }
          c.values_[key] = items;
        } else {
          if (!kv.second.IsScalar()) throw ConfigError("key '" + key + "': expected a scalar value");
          c.set(key, kv.second.as<std::string>());
        }
      }
    }
    return c;
  }

  /// Sets a scalar key from its textual form ("4000 kPa", "true", "prt-emd").
  void set(const std::string& key, const std::string& raw) {
    const KeySpec& spec = find(key);
    if (spec.kind == ValueKind::List)
      values_[key] = detail::split_list(raw);
    else
      values_[key] = {canonical(spec, raw)};
  }

  /// Sets a dimensioned key from an SI value.
  void set_si(const std::string& key, double v) {
    const KeySpec& spec = find(key);
    const auto units = detail::units_of(spec.kind);
    set(key, detail::format_double(v) + (units.empty() ? "" : std::string(" ") + units.front().name));
  }

  double number(const std::string& key) const {
    const KeySpec& spec = find(key);
    if (spec.kind == ValueKind::Text || spec.kind == ValueKind::Flag || spec.kind == ValueKind::List)
      throw ConfigError("key '" + key + "' is not numeric");
    return std::stod(values_.at(key).front());
  }
  long long integer(const std::string& key) const {
    if (find(key).kind != ValueKind::Integer) throw ConfigError("key '" + key + "' is not an integer");
    return std::stoll(values_.at(key).front());
  }
  const std::string& text(const std::string& key) const {
    if (find(key).kind == ValueKind::List) throw ConfigError("key '" + key + "' is a list");
    return values_.at(key).front();
  }
  bool flag(const std::string& key) const {
    if (find(key).kind != ValueKind::Flag) throw ConfigError("key '" + key + "' is not a flag");
    return values_.at(key).front() == "true";
  }
  const std::vector<std::string>& list(const std::string& key) const {
    if (find(key).kind != ValueKind::List) throw ConfigError("key '" + key + "' is not a list");
    return values_.at(key);
  }

  /// Canonical YAML: sections and keys in schema order, SI units.
  std::string serialize() const {
    YAML::Emitter out;
    out << YAML::BeginMap;
    std::string section;
    for (const KeySpec& k : schema_) {
      const auto dot = k.key.find('.');
      const std::string sec = k.key.substr(0, dot);
      if (sec != section) {
        if (!section.empty()) out << YAML::EndMap;
        out << YAML::Key << sec << YAML::Value << YAML::BeginMap;
        section = sec;
      }
      out << YAML::Key << k.key.substr(dot + 1) << YAML::Value;
      const auto& v = values_.at(k.key);
      if (k.kind == ValueKind::List) {
        out << YAML::Flow << YAML::BeginSeq;
        for (const std::string& s : v) out << YAML::DoubleQuoted << s;
        out << YAML::EndSeq;
        continue;
      }
      const auto units = detail::units_of(k.kind);
      if (!units.empty())
        out << v.front() + " " + units.front().name;
      else if (k.kind == ValueKind::Text)
        out << YAML::DoubleQuoted << v.front();
      else
        out << v.front();
    }
    if (!section.empty()) out << YAML::EndMap;
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
  }

  bool operator==(const Config& o) const { return values_ == o.values_; }
  const std::vector<KeySpec>& schema() const { return schema_; }

 private:
  const KeySpec& find(const std::string& key) const {
    for (const KeySpec& k : schema_)
      if (k.key == key) return k;
    const std::string section = key.substr(0, key.find('.'));
    for (const KeySpec& k : schema_)
      if (k.key.substr(0, k.key.find('.')) == section) throw ConfigError("unknown key '" + key + "'");
    throw ConfigError("unknown section '" + section + "'");
  }

  static std::string canonical(const KeySpec& spec, const std::string& raw) {
    const std::string v = detail::trim(raw);
    switch (spec.kind) {
      case ValueKind::Text: return v;
      case ValueKind::Flag:
        if (v == "true" || v == "1" || v == "yes") return "true";
        if (v == "false" || v == "0" || v == "no") return "false";
        throw ConfigError("key '" + spec.key + "': expected true or false, got '" + v + "'");
      case ValueKind::Integer: {
        long long x = 0;
        const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
        if (r.ec != std::errc() || r.ptr != v.data() + v.size())
          throw ConfigError("key '" + spec.key + "': expected an integer, got '" + v + "'");
        return std::to_string(x);
      }
      default: break;
    }
    double x = 0.0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
    if (r.ec != std::errc() || !std::isfinite(x))
      throw ConfigError("key '" + spec.key + "': expected a number, got '" + v + "'");
    const std::string unit = detail::trim(std::string(r.ptr, v.data() + v.size()));
    const auto units = detail::units_of(spec.kind);
    if (units.empty()) {
      if (!unit.empty())
        throw ConfigError("key '" + spec.key + "' is dimensionless; unexpected unit '" + unit + "'");
      return detail::format_double(x);
    }
    for (const auto& u : units)
      if (unit == u.name) return detail::format_double(x * u.factor);
    std::string allowed;
    for (const auto& u : units) allowed += std::string(allowed.empty() ? "" : ", ") + u.name;
    throw ConfigError("key '" + spec.key + "' needs a unit (" + allowed + ")" +
                      (unit.empty() ? "" : ", got '" + unit + "'"));
  }

  std::vector<KeySpec> schema_;
  std::map<std::string, std::vector<std::string>> values_;
};

}  // namespace dpsi
