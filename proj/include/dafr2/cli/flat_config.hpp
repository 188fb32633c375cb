#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dafr2/core/error.hpp"

namespace dafr2::cli {

using FlatMap = std::map<std::string, std::string>;

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

/// `key = value` lines; `#` starts a comment; blank lines are ignored.
inline FlatMap parse_flat(std::string_view text, const std::string& origin = "config") {
  FlatMap out;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    if (out.count(key)) throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    out[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return out;
}

inline FlatMap read_flat(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_flat(ss.str(), path.string());
}

inline std::pair<std::string, std::string> parse_assignment(std::string_view s) {
  const auto eq = s.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(s) + "' is not key=value");
  auto key = trim(s.substr(0, eq));
  if (key.empty()) throw ConfigError("override '" + std::string(s) + "' has an empty key");
  return {key, trim(s.substr(eq + 1))};
}

inline std::string render_flat(const FlatMap& m) {
  std::string out;
  for (const auto& [k, v] : m) out += k + " = " + v + "\n";
  return out;
}

/// Typed reads with errors that name the offending key.
class FlatReader {
 public:
  explicit FlatReader(const FlatMap& m) : m_(m) {}

  const std::string& str(const std::string& key) const {
    const auto it = m_.find(key);
    if (it == m_.end()) throw ConfigError("missing config key '" + key + "'");
    return it->second;
  }
  double real(const std::string& key) const { return number<double>(key); }
  std::size_t count(const std::string& key) const { return number<std::size_t>(key); }
  std::uint64_t u64(const std::string& key) const { return number<std::uint64_t>(key); }
  bool flag(const std::string& key) const {
    const auto& v = str(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "' expects a boolean, got '" + v + "'");
  }
  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }
  std::vector<std::size_t> counts(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& s : list(key)) out.push_back(parse_number<std::size_t>(key, s));
    return out;
  }

  template <typename T>
  static T parse_number(const std::string& key, std::string_view v) {
    T x{};
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc{} || p != v.data() + v.size() || v.empty())
      throw ConfigError("config key '" + key + "' expects a number, got '" + std::string(v) + "'");
    return x;
  }

 private:
  template <typename T>
  T number(const std::string& key) const {
    return parse_number<T>(key, str(key));
  }
  const FlatMap& m_;
};

}  // namespace dafr2::cli
