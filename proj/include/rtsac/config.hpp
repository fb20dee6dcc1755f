#pragma once

#include <map>
#include <optional>
#include <string>

namespace rtsac::harness {

// Flat key = value text config. '#' starts a comment; blank lines ignored.
// Later assignments win, so CLI overrides are applied by re-setting keys.
class Config {
 public:
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_str(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace rtsac::harness
