#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace irseg {

/// Scalar config value: boolean, number or string.
using ConfigScalar = std::variant<bool, double, std::string>;
/// A value is a scalar or a flat list of scalars.
using ConfigValue = std::variant<ConfigScalar, std::vector<ConfigScalar>>;

/// Small TOML subset: `[section]` headers, `key = value` lines, `#` comments,
/// double-quoted strings, numbers, true/false and single-line `[a, b]` lists.
/// Keys are addressed as "section.key".
class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& path);

  /// Applies a "section.key=value" override (value in the same syntax as the file).
  void set_override(const std::string& assignment);
  void set(const std::string& key, ConfigValue value) { values_[key] = std::move(value); }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, ConfigValue>& values() const { return values_; }

  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  /// A scalar is promoted to a one-element list.
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key, const std::vector<std::string>& fallback) const;

 private:
  std::map<std::string, ConfigValue> values_;
};

}  // namespace irseg
