#pragma once

// Flat key=value configuration files. Lines starting with '#' are comments;
// keys use dotted section prefixes (system.n_t, sweep.values, ...).

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace hbf {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key,
                                       const std::vector<std::string>& fallback) const;

  /// Keys in sorted order, one `key=value` per line.
  std::string to_string() const;
  void save(const std::filesystem::path& path) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

std::vector<std::string> split_list(const std::string& s, char sep = ',');

/// Shortest round-trippable decimal for a double.
std::string format_double(double v);

}  // namespace hbf
