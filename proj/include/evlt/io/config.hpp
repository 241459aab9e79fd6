#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace evlt::io {

/// UTF-8 key=value lines; '#' starts a comment, blank lines are ignored and
/// surrounding whitespace is trimmed. Later keys override earlier ones.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& source = "<config>");
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.contains(key); }
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Keys not in `known`, for rejecting typos.
  std::vector<std::string> unknown_keys(const std::set<std::string>& known) const;
  const std::map<std::string, std::string>& entries() const { return values_; }
  std::string to_string() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace evlt::io
