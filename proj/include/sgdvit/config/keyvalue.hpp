#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sgdvit/core/error.hpp"

namespace sgdvit::config {

/// Flat `dotted.key = value` text. Blank lines and lines starting with '#'
/// are ignored; keys are unique; order of first appearance is kept.
class KeyValues {
 public:
  static KeyValues parse(std::istream& is, const std::string& source = "<config>") {
    KeyValues kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto text = trim(line);
      if (text.empty() || text[0] == '#') continue;
      const auto eq = text.find('=');
      const auto where = source + ":" + std::to_string(lineno);
      if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
      auto key = trim(text.substr(0, eq));
      if (!valid_key(key)) throw ConfigError(where + ": invalid key '" + key + "'");
      if (kv.find(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
      kv.set(key, trim(text.substr(eq + 1)));
    }
    return kv;
  }

  static KeyValues parse_string(const std::string& text) {
    std::istringstream is(text);
    return parse(is);
  }

  static KeyValues load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    return parse(is, path);
  }

  std::string serialize() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write config file " + path);
    os << serialize();
  }

  const std::string* find(const std::string& key) const {
    for (const auto& e : entries_)
      if (e.first == key) return &e.second;
    return nullptr;
  }

  void set(const std::string& key, std::string value) {
    for (auto& e : entries_)
      if (e.first == key) {
        e.second = std::move(value);
        return;
      }
    entries_.emplace_back(key, std::move(value));
  }

  template <class V>
  void set(const std::string& key, const V& value) {
    set(key, format(value));
  }

  /// Typed lookup; missing keys yield `fallback`, malformed values throw.
  template <class V>
  V get(const std::string& key, V fallback) const {
    used_.insert(key);
    const auto* s = find(key);
    return s ? parse_value<V>(key, *s) : fallback;
  }

  /// Keys never read through get(); used to reject typos.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& e : entries_)
      if (!used_.count(e.first)) out.push_back(e.first);
    return out;
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  bool operator==(const KeyValues& o) const { return entries_ == o.entries_; }

  static std::string format(bool v) { return v ? "true" : "false"; }
  static std::string format(const std::string& v) { return v; }
  static std::string format(const char* v) { return v; }
  static std::string format(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
  }
  template <class I>
    requires std::is_integral_v<I>
  static std::string format(I v) {
    return std::to_string(v);
  }
  static std::string format(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format(v[i]);
    return s;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static bool valid_key(const std::string& k) {
    return !k.empty() && std::all_of(k.begin(), k.end(), [](char c) {
      return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '.';
    });
  }

  template <class V>
  static V parse_value(const std::string& key, const std::string& s) {
    auto bad = [&](const char* what) {
      return ConfigError("config key '" + key + "': expected " + what + ", got '" + s + "'");
    };
    if constexpr (std::is_same_v<V, bool>) {
      if (s == "true" || s == "1" || s == "yes") return true;
      if (s == "false" || s == "0" || s == "no") return false;
      throw bad("a boolean");
    } else if constexpr (std::is_same_v<V, std::string>) {
      return s;
    } else if constexpr (std::is_same_v<V, std::vector<double>>) {
      std::vector<double> out;
      std::stringstream ss(s);
      std::string item;
      while (std::getline(ss, item, ',')) out.push_back(parse_value<double>(key, trim(item)));
      return out;
    } else if constexpr (std::is_floating_point_v<V>) {
      V v{};
      auto r = std::from_chars(s.data(), s.data() + s.size(), v);
      if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw bad("a number");
      return v;
    } else {
      static_assert(std::is_integral_v<V>);
      V v{};
      auto r = std::from_chars(s.data(), s.data() + s.size(), v);
      if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw bad("a non-negative integer");
      return v;
    }
  }

  std::vector<std::pair<std::string, std::string>> entries_;
  mutable std::set<std::string> used_;
};

}  // namespace sgdvit::config
