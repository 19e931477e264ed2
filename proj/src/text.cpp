// SPDX-License-Identifier: Apache-2.0
#include "snerv/text.hpp"

#include <cctype>
#include <charconv>
#include <sstream>

namespace snerv {

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& text, const char* what) {
  throw ConfigError("invalid config field '" + field + "': '" + text + "' is not " + what);
}

template <typename T>
T parse_integral(const std::string& raw, const std::string& field) {
  const std::string text = trim(raw);
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) bad(field, raw, "an integer");
  return value;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string part;
  std::istringstream is(text);
  while (std::getline(is, part, sep)) out.push_back(trim(part));
  return out;
}

}  // namespace

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

int parse_int(const std::string& text, const std::string& field) {
  return parse_integral<int>(text, field);
}

std::int64_t parse_int64(const std::string& text, const std::string& field) {
  return parse_integral<std::int64_t>(text, field);
}

double parse_double(const std::string& raw, const std::string& field) {
  const std::string text = trim(raw);
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used != text.size()) bad(field, raw, "a number");
    return v;
  } catch (const std::logic_error&) {
    bad(field, raw, "a number");
  }
}

bool parse_bool(const std::string& raw, const std::string& field) {
  const std::string t = trim(raw);
  if (t == "true" || t == "1" || t == "on" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "off" || t == "no") return false;
  bad(field, raw, "a boolean");
}

std::vector<int> parse_int_list(const std::string& text, const std::string& field) {
  std::vector<int> out;
  for (const auto& part : split(text, ',')) out.push_back(parse_int(part, field));
  if (out.empty()) bad(field, text, "a comma-separated list");
  return out;
}

std::vector<Index> parse_dims(const std::string& text, const std::string& field) {
  std::vector<Index> out;
  for (const auto& part : split(text, 'x')) out.push_back(parse_int64(part, field));
  if (out.empty()) bad(field, text, "a dimension list like 64x128");
  return out;
}

std::string join_ints(const std::vector<int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

SectionedConfig parse_sectioned(const std::string& text) {
  SectionedConfig out;
  std::string section;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    out[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  auto sections = parse_sectioned(text);
  if (sections.size() > 1 || (sections.size() == 1 && !sections.begin()->first.empty())) {
    throw ConfigError("expected flat key=value text without sections");
  }
  return sections.empty() ? std::map<std::string, std::string>{} : sections.begin()->second;
}

}  // namespace snerv
