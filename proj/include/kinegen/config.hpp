#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kinegen/common.hpp"
#include "kinegen/csv.hpp"

namespace kinegen {

inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

// Sectioned key=value configuration:
//
//   # full-line comments start with '#' or ';'
//   [section]
//   key = value
//
// Keys before the first section header live in the unnamed section "".
// Values keep their text form; typed getters parse on demand.
class Config {
 public:
  static Config parse(const std::string& text) {
    Config cfg;
    std::string section;
    std::size_t line_no = 0, pos = 0;
    while (pos <= text.size()) {
      const std::size_t eol = std::min(text.find('\n', pos), text.size());
      std::string line = text.substr(pos, eol - pos);
      pos = eol + 1;
      ++line_no;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto last = line.find_last_not_of(" \t\r");
      line = line.substr(first, last - first + 1);
      if (line[0] == '#' || line[0] == ';') continue;
      if (line.front() == '[') {
        if (line.back() != ']' || line.size() < 3) {
          throw validation_error("config line " + std::to_string(line_no) +
                                 ": malformed section header");
        }
        section = line.substr(1, line.size() - 2);
        continue;
      }
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        throw validation_error("config line " + std::to_string(line_no) +
                               ": expected key = value");
      }
      std::string key = line.substr(0, eq);
      std::string value = line.substr(eq + 1);
      const auto kl = key.find_last_not_of(" \t");
      key = kl == std::string::npos ? "" : key.substr(0, kl + 1);
      const auto vf = value.find_first_not_of(" \t");
      value = vf == std::string::npos ? "" : value.substr(vf);
      if (key.empty()) {
        throw validation_error("config line " + std::to_string(line_no) +
                               ": empty key");
      }
      cfg.values_[section][key] = value;
    }
    return cfg;
  }

  static Config load(const std::string& path) { return parse(read_file(path)); }

  bool has(const std::string& section, const std::string& key) const {
    const auto s = values_.find(section);
    return s != values_.end() && s->second.count(key) > 0;
  }

  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const {
    const auto s = values_.find(section);
    if (s == values_.end()) return fallback;
    const auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
  }

  double get_double(const std::string& section, const std::string& key,
                    double fallback) const {
    if (!has(section, key)) return fallback;
    try {
      return parse_double(get(section, key, ""));
    } catch (const error&) {
      throw validation_error("config " + section + "." + key +
                             ": not a number");
    }
  }

  long long get_int(const std::string& section, const std::string& key,
                    long long fallback) const {
    if (!has(section, key)) return fallback;
    const std::string& text = values_.at(section).at(key);
    long long out = 0;
    const auto [ptr, ec] =
        std::from_chars(text.data(), text.data() + text.size(), out);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw validation_error("config " + section + "." + key +
                             ": not an integer");
    }
    return out;
  }

  std::uint64_t get_u64(const std::string& section, const std::string& key,
                        std::uint64_t fallback) const {
    if (!has(section, key)) return fallback;
    const std::string& text = values_.at(section).at(key);
    std::uint64_t out = 0;
    const auto [ptr, ec] =
        std::from_chars(text.data(), text.data() + text.size(), out);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw validation_error("config " + section + "." + key +
                             ": not an unsigned integer");
    }
    return out;
  }

  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const {
    if (!has(section, key)) return fallback;
    const std::string& text = values_.at(section).at(key);
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw validation_error("config " + section + "." + key +
                           ": not a boolean");
  }

  void set(const std::string& section, const std::string& key,
           std::string value) {
    values_[section][key] = std::move(value);
  }

  // normalized form: sorted sections and keys, no comments or spacing, so
  // cosmetically different files hash identically
  std::string canonical() const {
    std::string out;
    for (const auto& [section, keys] : values_) {
      if (!section.empty()) out += "[" + section + "]\n";
      for (const auto& [key, value] : keys) {
        out += key + "=" + value + "\n";
      }
    }
    return out;
  }

  std::uint64_t hash() const { return fnv1a(canonical()); }

 private:
  std::map<std::string, std::map<std::string, std::string>> values_;
};

// --- run manifest ------------------------------------------------------

// Written next to every command's outputs. The timestamp key is kept for
// shape but holds null: wall-clock time would break the byte-identical
// rerun guarantee.
inline nlohmann::ordered_json manifest_json(
    const std::string& command, const std::vector<std::string>& inputs,
    std::uint64_t config_hash, std::uint64_t seed,
    const std::vector<std::string>& notes = {}) {
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(config_hash));
  nlohmann::ordered_json j;
  j["command"] = command;
  j["inputs"] = inputs;
  j["config_hash"] = std::string(hex);
  j["seed"] = seed;
  j["version"] = version;
  j["timestamp"] = nullptr;
  if (!notes.empty()) j["notes"] = notes;
  return j;
}

inline void write_manifest(const std::string& path,
                           const nlohmann::ordered_json& manifest) {
  write_file_atomic(path, manifest.dump(2) + "\n");
}

}  // namespace kinegen
