#pragma once

#include <map>
#include <string>

namespace lcr {

// Flat "key = value" text: one pair per line, '#' starts a comment, blank
// lines are ignored. Keys are case-sensitive.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::map<std::string, std::string> read_key_value_file(const std::string& path);
std::string format_key_values(const std::map<std::string, std::string>& values);

// Typed accessors; malformed values throw ConfigError naming the key.
double kv_double(const std::string& key, const std::string& value);
std::size_t kv_size(const std::string& key, const std::string& value);
bool kv_bool(const std::string& key, const std::string& value);

}  // namespace lcr
