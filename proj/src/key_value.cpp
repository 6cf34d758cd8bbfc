#include <ebbsvm/key_value.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <ebbsvm/error.hpp>

namespace ebbsvm {

std::string trim(std::string_view text) {
  auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view text, char separator) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    auto pos = text.find(separator, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(text.substr(start));
      return parts;
    }
    parts.emplace_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

double parse_double(std::string_view text) {
  auto s = trim(text);
  if (s.empty()) fail(ErrorKind::format, "empty number");
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (*begin == '+') ++begin;
  double value = 0;
  std::from_chars_result result{};
  // Hex floats are written as "0x1.8p+1" / "-0x1.8p+1"; from_chars wants them without the prefix.
  bool negative = (*begin == '-');
  const char* digits = begin + (negative ? 1 : 0);
  if (end - digits > 2 && digits[0] == '0' && (digits[1] == 'x' || digits[1] == 'X')) {
    result = std::from_chars(digits + 2, end, value, std::chars_format::hex);
    if (negative) value = -value;
  } else {
    result = std::from_chars(begin, end, value);
  }
  if (result.ec != std::errc() || result.ptr != end) {
    // from_chars rejects "inf"/"nan" spellings produced elsewhere; accept them explicitly.
    std::string lower(s);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "inf" || lower == "+inf") return INFINITY;
    if (lower == "-inf") return -INFINITY;
    if (lower == "nan") return NAN;
    fail(ErrorKind::format, "not a number: '" + s + "'");
  }
  return value;
}

std::uint64_t parse_u64(std::string_view text) {
  auto s = trim(text);
  std::uint64_t value = 0;
  auto result = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || result.ec != std::errc() || result.ptr != s.data() + s.size())
    fail(ErrorKind::format, "not an unsigned integer: '" + s + "'");
  return value;
}

bool parse_bool(std::string_view text) {
  auto s = trim(text);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  fail(ErrorKind::format, "not a boolean: '" + s + "'");
}

std::string format_double(double value) {
  char buffer[64];
  auto result = std::to_chars(buffer, buffer + sizeof buffer, value);
  return std::string(buffer, result.ptr);
}

std::string format_hex(double value) {
  if (!std::isfinite(value)) return format_double(value);
  char buffer[64];
  char* out = buffer;
  if (std::signbit(value)) {
    *out++ = '-';
    value = -value;
  }
  *out++ = '0';
  *out++ = 'x';
  auto result = std::to_chars(out, buffer + sizeof buffer, value, std::chars_format::hex);
  return std::string(buffer, result.ptr);
}

KeyValueFile KeyValueFile::parse(std::istream& in, const std::string& origin) {
  KeyValueFile file;
  file.origin_ = origin;
  std::string line;
  std::string section;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    auto text = trim(line);
    if (text.empty() || text[0] == '#' || text[0] == ';') continue;
    if (text.front() == '[') {
      if (text.back() != ']')
        fail(ErrorKind::format, origin + ":" + std::to_string(line_number) + ": unterminated section header");
      section = trim(std::string_view(text).substr(1, text.size() - 2));
      continue;
    }
    auto eq = text.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::format, origin + ":" + std::to_string(line_number) + ": expected 'key = value'");
    auto key = trim(std::string_view(text).substr(0, eq));
    if (key.empty()) fail(ErrorKind::format, origin + ":" + std::to_string(line_number) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    file.set(key, trim(std::string_view(text).substr(eq + 1)));
  }
  return file;
}

KeyValueFile KeyValueFile::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  return parse(in, path.string());
}

std::optional<std::string> KeyValueFile::find(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

const std::string& KeyValueFile::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) fail(ErrorKind::format, origin_ + ": missing key '" + key + "'");
  return it->second;
}

std::string KeyValueFile::get_or(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueFile::get_double(const std::string& key) const { return parse_double(get(key)); }

std::uint64_t KeyValueFile::get_u64(const std::string& key) const { return parse_u64(get(key)); }

void KeyValueFile::set(const std::string& key, std::string value) {
  if (values_.count(key) == 0) order_.push_back(key);
  values_[key] = std::move(value);
}

void KeyValueFile::write(std::ostream& out) const {
  for (const auto& key : order_) out << key << " = " << values_.at(key) << '\n';
}

}  // namespace ebbsvm
