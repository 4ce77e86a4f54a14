#pragma once

#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace capit {

/// Flat `section.key = value` configuration. Readers pull typed values with a
/// fallback; keys never read are reported by `require_all_used` so typos in a
/// config file are rejected rather than ignored.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in);
  static KeyValueConfig from_file(const std::string& path);

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const { return entries_; }

  std::string get(const std::string& key, const std::string& fallback) const;
  double get(const std::string& key, double fallback) const;
  int get(const std::string& key, int fallback) const;
  long long get(const std::string& key, long long fallback) const;
  bool get(const std::string& key, bool fallback) const;
  std::vector<double> get(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<int> get(const std::string& key, const std::vector<int>& fallback) const;

  /// Throws ConfigError naming every key under `prefixes` (all keys when
  /// empty) that no getter consumed.
  void require_all_used(const std::vector<std::string>& prefixes = {}) const;

 private:
  const std::string* lookup(const std::string& key) const;
  std::map<std::string, std::string> entries_;
  mutable std::set<std::string> used_;
};

std::string format_double(double v);  // shortest round-tripping text
std::string format_list(const std::vector<double>& v);
std::string format_list(const std::vector<int>& v);

}  // namespace capit
