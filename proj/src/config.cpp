#include "capit/config.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <istream>
#include <sstream>

#include "capit/error.hpp"
#include "capit/text.hpp"

namespace capit {

KeyValueConfig KeyValueConfig::parse(std::istream& in) {
  KeyValueConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (cfg.has(key)) throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key " + key);
    cfg.entries_[key] = trim(t.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  return parse(in);
}

const std::string* KeyValueConfig::lookup(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

namespace {
template <typename T, typename Parse>
T typed(const std::string* v, const std::string& key, T fallback, Parse parse) {
  if (!v) return fallback;
  try {
    return parse(*v);
  } catch (const InvalidInput& e) {
    throw ConfigError(key + ": " + e.what());
  }
}
}  // namespace

std::string KeyValueConfig::get(const std::string& key, const std::string& fallback) const {
  const auto* v = lookup(key);
  return v ? *v : fallback;
}

double KeyValueConfig::get(const std::string& key, double fallback) const {
  return typed(lookup(key), key, fallback, parse_double);
}

long long KeyValueConfig::get(const std::string& key, long long fallback) const {
  return typed(lookup(key), key, fallback, parse_int);
}

int KeyValueConfig::get(const std::string& key, int fallback) const {
  const long long v = get(key, static_cast<long long>(fallback));
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) throw ConfigError(key + ": out of range");
  return static_cast<int>(v);
}

bool KeyValueConfig::get(const std::string& key, bool fallback) const {
  return typed(lookup(key), key, fallback, parse_bool);
}

std::vector<double> KeyValueConfig::get(const std::string& key, const std::vector<double>& fallback) const {
  return typed(lookup(key), key, fallback, [](const std::string& s) {
    std::vector<double> out;
    for (const auto& f : split(s, ',')) out.push_back(parse_double(f));
    return out;
  });
}

std::vector<int> KeyValueConfig::get(const std::string& key, const std::vector<int>& fallback) const {
  return typed(lookup(key), key, fallback, [](const std::string& s) {
    std::vector<int> out;
    for (const auto& f : split(s, ',')) out.push_back(static_cast<int>(parse_int(f)));
    return out;
  });
}

void KeyValueConfig::require_all_used(const std::vector<std::string>& prefixes) const {
  std::string unknown;
  for (const auto& [key, value] : entries_) {
    if (used_.count(key)) continue;
    bool in_scope = prefixes.empty();
    for (const auto& p : prefixes) in_scope = in_scope || key.rfind(p, 0) == 0;
    if (in_scope) unknown += (unknown.empty() ? "" : ", ") + key;
  }
  if (!unknown.empty()) throw ConfigError("unknown config keys: " + unknown);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? ", " : "") + format_double(v[k]);
  return out;
}

std::string format_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? ", " : "") + std::to_string(v[k]);
  return out;
}

}  // namespace capit
