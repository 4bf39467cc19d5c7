#pragma once

#include <map>
#include <string>

namespace esrt {

// Flat key=value config files: one pair per line, '#' starts a comment,
// blank lines ignored, whitespace around keys and values trimmed.
// Malformed lines or duplicate keys throw ConfigError.
std::map<std::string, std::string> parse_kv_file(const std::string& path);

}  // namespace esrt
