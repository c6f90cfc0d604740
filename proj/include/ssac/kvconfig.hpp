#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ssac/core.hpp"

namespace ssac {
inline namespace SSAC_ABI {

/// Flat `key = value` text. Blank lines and `#` comments are ignored.
struct KeyValueEntry {
  std::string key;
  std::string value;
  int line = 0;
};

std::vector<KeyValueEntry> parse_key_values(const std::string& text);
std::vector<KeyValueEntry> load_key_values(const std::string& path);

/// Dispatch table from keys to setters; unknown keys and unparsable values
/// raise ConfigError naming the key.
class KeyValueBinder {
 public:
  using Setter = std::function<void(const std::string& value)>;

  KeyValueBinder& bind(std::string key, Setter setter);
  KeyValueBinder& bind(std::string key, double& target);
  KeyValueBinder& bind(std::string key, float& target);
  KeyValueBinder& bind(std::string key, int& target);
  KeyValueBinder& bind(std::string key, std::uint64_t& target);
  KeyValueBinder& bind(std::string key, bool& target);
  KeyValueBinder& bind(std::string key, std::string& target);
  /// "lo hi" pair.
  KeyValueBinder& bind_range(std::string key, double& lo, double& hi);

  bool knows(const std::string& key) const { return setters_.count(key) != 0; }
  void apply(const KeyValueEntry& entry) const;
  void apply(const std::vector<KeyValueEntry>& entries) const;

 private:
  std::map<std::string, Setter> setters_;
};

double parse_double(const std::string& key, const std::string& value);
long long parse_integer(const std::string& key, const std::string& value);

/// Shortest text that round-trips the value exactly.
std::string format_real(double value);

}  // namespace SSAC_ABI
}  // namespace ssac
