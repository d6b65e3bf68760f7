/**
 * @file keyvalue.hpp
 * @brief Minimal TOML-style key/value text: `[section]` headers, `key = value`
 *        lines, `#` comments, optional double quotes around values.
 *
 * Keys are flattened to "section.key". Arrays are kept as raw text.
 */
#pragma once

#include <map>
#include <string>
#include <vector>

namespace anisosr {

using KeyValues = std::map<std::string, std::string>;

/// Throws ValidationError with the line number on malformed input.
KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values_file(const std::string& path);

/// Renders sorted keys grouped by their first dotted component.
std::string format_key_values(const KeyValues& kv);

double kv_double(const KeyValues& kv, const std::string& key);
std::size_t kv_size(const KeyValues& kv, const std::string& key);
bool kv_bool(const KeyValues& kv, const std::string& key);
/// "[a, b, c]" -> {"a", "b", "c"}.
std::vector<std::string> kv_list(const KeyValues& kv, const std::string& key);

}  // namespace anisosr
