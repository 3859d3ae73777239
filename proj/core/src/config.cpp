#include "irseg/config.hpp"

#include <cmath>
#include <sstream>

#include "irseg/error.hpp"
#include "irseg/pgm.hpp"

namespace irseg {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Drops a trailing comment that is not inside a string.
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

ConfigScalar parse_scalar(const std::string& raw, const std::string& where) {
  const std::string t = trim(raw);
  if (t.empty()) throw usage_error("config.value", where + ": empty value");
  if (t.front() == '"') {
    if (t.size() < 2 || t.back() != '"') throw usage_error("config.string", where + ": unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < t.size(); ++i) {
      if (t[i] == '\\' && i + 2 < t.size()) {
        const char n = t[++i];
        out += n == 'n' ? '\n' : n == 't' ? '\t' : n;
      } else {
        out += t[i];
      }
    }
    return out;
  }
  if (t == "true") return true;
  if (t == "false") return false;
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != t.size() || !std::isfinite(v)) throw usage_error("config.value", where + ": cannot parse value '" + t + "'");
  return v;
}

std::vector<std::string> split_list(const std::string& body) {
  std::vector<std::string> items;
  std::string cur;
  bool in_str = false;
  for (char c : body) {
    if (c == '"') in_str = !in_str;
    if (c == ',' && !in_str) {
      items.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty()) items.push_back(cur);
  return items;
}

ConfigValue parse_value(const std::string& raw, const std::string& where) {
  const std::string t = trim(raw);
  if (!t.empty() && t.front() == '[') {
    if (t.back() != ']') throw usage_error("config.list", where + ": unterminated list");
    std::vector<ConfigScalar> items;
    for (const auto& item : split_list(t.substr(1, t.size() - 2))) items.push_back(parse_scalar(item, where));
    return items;
  }
  return parse_scalar(t, where);
}

const char* type_name(const ConfigScalar& s) {
  return std::holds_alternative<bool>(s) ? "boolean" : std::holds_alternative<double>(s) ? "number" : "string";
}

template <class T>
T scalar_as(const ConfigScalar& s, const std::string& key) {
  if (const auto* v = std::get_if<T>(&s)) return *v;
  throw usage_error("config.type", "config key '" + key + "' has the wrong type (" + type_name(s) + ")");
}

const ConfigScalar& only_scalar(const ConfigValue& v, const std::string& key) {
  if (const auto* s = std::get_if<ConfigScalar>(&v)) return *s;
  throw usage_error("config.type", "config key '" + key + "' must be a single value, not a list");
}

template <class T>
std::vector<T> as_list(const ConfigValue& v, const std::string& key) {
  std::vector<T> out;
  if (const auto* s = std::get_if<ConfigScalar>(&v)) {
    out.push_back(scalar_as<T>(*s, key));
  } else {
    for (const auto& item : std::get<std::vector<ConfigScalar>>(v)) out.push_back(scalar_as<T>(item, key));
  }
  return out;
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = "line " + std::to_string(lineno);
    const std::string t = trim(strip_comment(line));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) throw usage_error("config.section", where + ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw usage_error("config.syntax", where + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw usage_error("config.syntax", where + ": empty key");
    c.values_[section.empty() ? key : section + "." + key] = parse_value(t.substr(eq + 1), where);
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw usage_error("config.missing", "config file not found: " + path.string());
  return parse(read_file(path));
}

void Config::set_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw usage_error("config.override", "override must look like section.key=value");
  const std::string key = trim(assignment.substr(0, eq));
  std::string raw = trim(assignment.substr(eq + 1));
  // Bare words are strings on the command line.
  try {
    values_[key] = parse_value(raw, "override " + key);
  } catch (const Error&) {
    values_[key] = ConfigScalar{raw};
  }
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : scalar_as<double>(only_scalar(it->second, key), key);
}

long long Config::get_int(const std::string& key, long long fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const double v = scalar_as<double>(only_scalar(it->second, key), key);
  if (v != std::floor(v)) throw usage_error("config.type", "config key '" + key + "' must be an integer");
  return static_cast<long long>(v);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : scalar_as<bool>(only_scalar(it->second, key), key);
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : scalar_as<std::string>(only_scalar(it->second, key), key);
}

std::vector<double> Config::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : as_list<double>(it->second, key);
}

std::vector<std::string> Config::get_strings(const std::string& key, const std::vector<std::string>& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : as_list<std::string>(it->second, key);
}

}  // namespace irseg
