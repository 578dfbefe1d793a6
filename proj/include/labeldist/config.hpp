#pragma once
// Flat key=value configuration. Lines starting with '#' are comments.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace labeldist {

class Config {
 public:
  Config() = default;

  /// Throws InputError naming the file and line of a malformed entry.
  static Config parse(std::string_view text, const std::string& source = "<config>");
  static Config load(const std::filesystem::path& path);

  /// Later values replace earlier ones.
  void set(const std::string& key, std::string value);
  void merge(const Config& other);
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  // Typed getters; throw ConfigError when a present value does not parse.
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;
  std::vector<std::size_t> get_sizes(const std::string& key, std::vector<std::size_t> fallback) const;

  /// Sorted "key=value" lines.
  std::string serialize() const;
  void save(const std::filesystem::path& path, const std::string& comment = {}) const;

 private:
  std::map<std::string, std::string> values_;
};

std::string join(const std::vector<double>& values);
std::string join(const std::vector<std::size_t>& values);

}  // namespace labeldist
