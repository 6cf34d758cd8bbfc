#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ebbsvm {

/// Flat `key = value` text with `#` comments. A `[section]` header prefixes the
/// keys that follow it with "section.". Later duplicates overwrite earlier ones.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::istream& in, const std::string& origin = "<stream>");
  static KeyValueFile read(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> find(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;

  double get_double(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;

  void set(const std::string& key, std::string value);
  void write(std::ostream& out) const;

  const std::map<std::string, std::string>& entries() const { return values_; }
  const std::string& origin() const { return origin_; }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
  std::string origin_;
};

std::string trim(std::string_view text);
std::vector<std::string> split(std::string_view text, char separator);

double parse_double(std::string_view text);
std::uint64_t parse_u64(std::string_view text);
bool parse_bool(std::string_view text);

/// Shortest decimal representation that round-trips exactly.
std::string format_double(double value);
/// C99 hexadecimal float, bit-exact and locale independent.
std::string format_hex(double value);

}  // namespace ebbsvm
