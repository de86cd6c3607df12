#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sarc {

// Flat `key = value` text with `#` comments. Keys are unique; lookups record
// which keys were consumed so callers can reject typos.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<text>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::int64_t> get_int_list(const std::string& key,
                                         const std::vector<std::int64_t>& fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;

  // Throws ConfigError listing keys that no getter has read.
  void reject_unused() const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  std::string to_text() const;

 private:
  const std::string* find(const std::string& key) const;

  std::map<std::string, std::string> entries_;
  std::string origin_;
  mutable std::map<std::string, bool> used_;
};

// Shortest decimal text that round-trips the double exactly.
std::string format_double(double v);
std::string join_ints(const std::vector<std::int64_t>& values);
std::string join_doubles(const std::vector<double>& values);

}  // namespace sarc
