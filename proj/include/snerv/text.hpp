// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "snerv/tensor.hpp"

namespace snerv {

// Field parsers; failures throw ConfigError naming `field`.
int parse_int(const std::string& text, const std::string& field);
std::int64_t parse_int64(const std::string& text, const std::string& field);
double parse_double(const std::string& text, const std::string& field);
bool parse_bool(const std::string& text, const std::string& field);
/// "2,2,2" -> {2,2,2}
std::vector<int> parse_int_list(const std::string& text, const std::string& field);
/// "64x128" or "16x2x4"
std::vector<Index> parse_dims(const std::string& text, const std::string& field);
std::string join_ints(const std::vector<int>& values);

std::string trim(const std::string& s);

/// Flat `key=value` lines; blank lines and `#` comments ignored.
std::map<std::string, std::string> parse_key_values(const std::string& text);

/// `[section]` headers followed by `key=value` lines. Keys before any header
/// land in section "".
using SectionedConfig = std::map<std::string, std::map<std::string, std::string>>;
SectionedConfig parse_sectioned(const std::string& text);

}  // namespace snerv
