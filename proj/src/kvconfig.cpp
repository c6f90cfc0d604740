#include "ssac/kvconfig.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ssac/errors.hpp"

namespace ssac {
inline namespace SSAC_ABI {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<KeyValueEntry> parse_key_values(const std::string& text) {
  std::vector<KeyValueEntry> out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(line, "line " + std::to_string(number) + " is not of the form key = value");
    }
    KeyValueEntry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), number};
    if (e.key.empty()) throw ConfigError("", "line " + std::to_string(number) + " has an empty key");
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<KeyValueEntry> load_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw StorageError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

double parse_double(const std::string& key, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (value.empty() || *end != '\0' || errno == ERANGE) throw ConfigError(key, "expected a number, got '" + value + "'");
  return v;
}

long long parse_integer(const std::string& key, const std::string& value) {
  long long v = 0;
  const auto* first = value.data();
  const auto* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (value.empty() || ec != std::errc() || ptr != last) throw ConfigError(key, "expected an integer, got '" + value + "'");
  return v;
}

std::string format_real(double value) {
  char buf[32];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, value);
    if (std::strtod(buf, nullptr) == value) break;
  }
  return buf;
}

KeyValueBinder& KeyValueBinder::bind(std::string key, Setter setter) {
  setters_[std::move(key)] = std::move(setter);
  return *this;
}

KeyValueBinder& KeyValueBinder::bind(std::string key, double& target) {
  return bind(key, [&target, key](const std::string& v) { target = parse_double(key, v); });
}

KeyValueBinder& KeyValueBinder::bind(std::string key, float& target) {
  return bind(key, [&target, key](const std::string& v) { target = static_cast<float>(parse_double(key, v)); });
}

KeyValueBinder& KeyValueBinder::bind(std::string key, int& target) {
  return bind(key, [&target, key](const std::string& v) { target = static_cast<int>(parse_integer(key, v)); });
}

KeyValueBinder& KeyValueBinder::bind(std::string key, std::uint64_t& target) {
  return bind(key, [&target, key](const std::string& v) {
    std::uint64_t n = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key, "expected an unsigned integer");
    target = n;
  });
}

KeyValueBinder& KeyValueBinder::bind(std::string key, bool& target) {
  return bind(key, [&target, key](const std::string& v) {
    if (v == "true" || v == "1") {
      target = true;
    } else if (v == "false" || v == "0") {
      target = false;
    } else {
      throw ConfigError(key, "expected true/false, got '" + v + "'");
    }
  });
}

KeyValueBinder& KeyValueBinder::bind(std::string key, std::string& target) {
  return bind(key, [&target](const std::string& v) { target = v; });
}

KeyValueBinder& KeyValueBinder::bind_range(std::string key, double& lo, double& hi) {
  return bind(key, [&lo, &hi, key](const std::string& v) {
    std::istringstream in(v);
    std::string a, b, extra;
    if (!(in >> a >> b) || (in >> extra)) throw ConfigError(key, "expected 'lo hi', got '" + v + "'");
    const double l = parse_double(key, a), h = parse_double(key, b);
    if (l > h) throw ConfigError(key, "range is empty");
    lo = l;
    hi = h;
  });
}

void KeyValueBinder::apply(const KeyValueEntry& entry) const {
  const auto it = setters_.find(entry.key);
  if (it == setters_.end()) throw ConfigError(entry.key, "unknown key (line " + std::to_string(entry.line) + ")");
  it->second(entry.value);
}

void KeyValueBinder::apply(const std::vector<KeyValueEntry>& entries) const {
  for (const auto& e : entries) apply(e);
}

}  // namespace SSAC_ABI
}  // namespace ssac
