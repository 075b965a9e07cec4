#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ddopt {

// Hierarchical key-value configuration: `[section]` headers, `key = value`
// lines, `#` comments. Keys are addressed as "section.key" ("key" at the
// root). Every lookup records the resolved value, defaulted or not, so the
// full effective configuration can be printed and no hidden parameters
// exist.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  // "key=value" or "section.key=value"; wins over file content.
  void apply_override(const std::string& assignment);

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key,
                         const std::string& default_value) const;
  std::string require_string(const std::string& key) const;
  double get_double(const std::string& key, double default_value) const;
  std::int64_t get_int(const std::string& key,
                       std::int64_t default_value) const;
  bool get_bool(const std::string& key, bool default_value) const;
  std::vector<std::string> get_list(const std::string& key,
                                    const std::string& default_csv) const;
  std::vector<std::int64_t> get_int_list(const std::string& key,
                                         const std::string& default_csv) const;

  // Keys present in the file/overrides that no lookup ever touched;
  // non-empty means a typo or an override onto an unknown key.
  std::vector<std::string> unconsumed_keys() const;

  // key -> final value for every key looked up so far, defaults included.
  const std::map<std::string, std::string>& resolved() const {
    return resolved_;
  }

  const std::map<std::string, std::string>& raw() const { return values_; }

 private:
  std::string lookup(const std::string& key, const std::string& fallback,
                     bool required) const;

  std::map<std::string, std::string> values_;
  mutable std::map<std::string, std::string> resolved_;
  mutable std::map<std::string, bool> consumed_;
};

}  // namespace ddopt
