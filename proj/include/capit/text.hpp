#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace capit {

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);  // fields are trimmed
double parse_double(const std::string& s);                      // strict; throws InvalidInput
long long parse_int(const std::string& s);
bool parse_bool(const std::string& s);

/// 64-bit FNV-1a, used for dataset fingerprints and checkpoint checksums.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n);
  void update(std::string_view s) { update(s.data(), s.size()); }
  std::uint64_t digest() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace capit
