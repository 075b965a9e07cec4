#include "ddopt/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "ddopt/csv.hpp"
#include "ddopt/errors.hpp"

namespace ddopt {

namespace {

std::string trim(const std::string& s) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  auto begin = std::find_if_not(s.begin(), s.end(), is_space);
  auto end = std::find_if_not(s.rbegin(), s.rend(), is_space).base();
  return begin < end ? std::string(begin, end) : std::string();
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

Config Config::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f)
    throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream buf;
  buf << f.rdbuf();
  return from_string(buf.str());
}

Config Config::from_string(const std::string& text) {
  Config cfg;
  std::stringstream ss(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": empty key");
    if (!section.empty()) key = section + "." + key;
    cfg.values_[key] = value;
  }
  return cfg;
}

void Config::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + assignment + "': expected key=value");
  const std::string key = trim(assignment.substr(0, eq));
  if (key.empty())
    throw ConfigError("override '" + assignment + "': empty key");
  values_[key] = trim(assignment.substr(eq + 1));
  consumed_[key] = false;
}

bool Config::has(const std::string& key) const {
  return values_.count(key) > 0;
}

std::string Config::lookup(const std::string& key, const std::string& fallback,
                           bool required) const {
  const auto it = values_.find(key);
  if (it == values_.end()) {
    if (required) throw ConfigError("config: missing required key '" + key + "'");
    resolved_[key] = fallback;
    return fallback;
  }
  consumed_[key] = true;
  resolved_[key] = it->second;
  return it->second;
}

std::string Config::get_string(const std::string& key,
                               const std::string& default_value) const {
  return lookup(key, default_value, false);
}

std::string Config::require_string(const std::string& key) const {
  return lookup(key, "", true);
}

double Config::get_double(const std::string& key, double default_value) const {
  const std::string s = lookup(key, "", false);
  if (!values_.count(key)) {
    resolved_[key] = double_to_string(default_value);
    return default_value;
  }
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' is not a number: '" + s + "'");
  }
}

std::int64_t Config::get_int(const std::string& key,
                             std::int64_t default_value) const {
  const std::string s = lookup(key, "", false);
  if (!values_.count(key)) {
    resolved_[key] = std::to_string(default_value);
    return default_value;
  }
  std::int64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("config: key '" + key + "' is not an integer: '" + s +
                      "'");
  return v;
}

bool Config::get_bool(const std::string& key, bool default_value) const {
  const std::string s = lookup(key, default_value ? "true" : "false", false);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("config: key '" + key + "' is not a boolean: '" + s + "'");
}

std::vector<std::string> Config::get_list(const std::string& key,
                                          const std::string& default_csv) const {
  return split_csv(lookup(key, default_csv, false));
}

std::vector<std::int64_t> Config::get_int_list(
    const std::string& key, const std::string& default_csv) const {
  std::vector<std::int64_t> out;
  for (const std::string& item : get_list(key, default_csv)) {
    std::int64_t v = 0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc() || res.ptr != item.data() + item.size())
      throw ConfigError("config: list key '" + key +
                        "' has a non-integer entry: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> Config::unconsumed_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, value] : values_)
    if (!consumed_.count(key) || !consumed_.at(key)) out.push_back(key);
  return out;
}

}  // namespace ddopt
