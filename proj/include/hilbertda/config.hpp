#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hilbertda/core.hpp"

namespace hilbertda::config {

/** Thrown for malformed, missing, or unrecognized configuration input. */
struct ConfigError : Error {
  using Error::Error;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto from = s.find_first_not_of(" \t\r\n");
  if (from == std::string::npos) return "";
  const auto to = s.find_last_not_of(" \t\r\n");
  return s.substr(from, to - from + 1);
}

}  // namespace detail

/** Flat key=value configuration: one entry per line, '#' starts a comment,
 *  duplicate keys are an error. Every command checks the keys it received
 *  against its own allowlist so typos never pass silently. */
class Config {
 public:
  static Config parse_string(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
      const std::string key = detail::trim(line.substr(0, eq));
      const std::string value = detail::trim(line.substr(eq + 1));
      if (key.empty())
        throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
      if (!cfg.values_.emplace(key, value).second)
        throw ConfigError("config: duplicate key '" + key + "'");
    }
    return cfg;
  }

  static Config parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str());
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  /** Inserts or overwrites, used for command-line overrides. */
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: missing key '" + key + "'");
    return it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key) const { return to_double(key, get_string(key)); }

  double get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }

  long get_long(const std::string& key) const { return to_long(key, get_string(key)); }

  long get_long(const std::string& key, long fallback) const {
    return has(key) ? get_long(key) : fallback;
  }

  /** The mandatory reproducibility seed. */
  std::uint64_t get_seed() const {
    const std::string raw = get_string("seed");
    // stoull accepts a leading '-' and wraps, so reject signs up front.
    if (raw.empty() || raw.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError("config: seed '" + raw + "' is not an unsigned integer");
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(raw, &used);
      if (used != raw.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: seed '" + raw + "' is not an unsigned integer");
    }
  }

  /** Comma-separated list of integers. */
  std::vector<long> get_long_list(const std::string& key) const {
    const std::string raw = get_string(key);
    std::vector<long> out;
    std::istringstream in(raw);
    std::string item;
    while (std::getline(in, item, ','))
      out.push_back(to_long(key, detail::trim(item)));
    if (out.empty()) throw ConfigError("config: key '" + key + "' has no entries");
    return out;
  }

  std::vector<long> get_long_list(const std::string& key,
                                  const std::vector<long>& fallback) const {
    return has(key) ? get_long_list(key) : fallback;
  }

  /** Comma-separated list of words. */
  std::vector<std::string> get_string_list(const std::string& key,
                                           const std::vector<std::string>& fallback) const {
    if (!has(key)) return fallback;
    std::vector<std::string> out;
    std::istringstream in(get_string(key));
    std::string item;
    while (std::getline(in, item, ',')) {
      item = detail::trim(item);
      if (!item.empty()) out.push_back(item);
    }
    if (out.empty()) throw ConfigError("config: key '" + key + "' has no entries");
    return out;
  }

  /** Rejects any key outside the given allowlist. */
  void require_known_keys(const std::set<std::string>& allowed) const {
    for (const auto& [key, value] : values_)
      if (!allowed.count(key))
        throw ConfigError("config: unknown key '" + key + "'");
  }

 private:
  static double to_double(const std::string& key, const std::string& raw) {
    try {
      std::size_t used = 0;
      const double v = std::stod(raw, &used);
      if (used != raw.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "' value '" + raw + "' is not a number");
    }
  }

  static long to_long(const std::string& key, const std::string& raw) {
    try {
      std::size_t used = 0;
      const long v = std::stol(raw, &used);
      if (used != raw.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "' value '" + raw + "' is not an integer");
    }
  }

  std::map<std::string, std::string> values_;
};

}  // namespace hilbertda::config
