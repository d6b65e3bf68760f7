#include "anisosr/keyvalue.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "anisosr/errors.hpp"

namespace anisosr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t n = 0; n < line.size(); ++n) {
    if (line[n] == '"') quoted = !quoted;
    if (line[n] == '#' && !quoted) return line.substr(0, n);
  }
  return line;
}

const std::string& require(const KeyValues& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw ValidationError("missing key '" + key + "'");
  return it->second;
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ValidationError("empty section header on line " + std::to_string(lineno));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("expected key = value on line " + std::to_string(lineno));
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ValidationError("empty key on line " + std::to_string(lineno));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    kv[section.empty() ? key : section + "." + key] = value;
  }
  return kv;
}

KeyValues read_key_values_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_key_values(ss.str());
}

std::string format_key_values(const KeyValues& kv) {
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
  for (const auto& [key, value] : kv) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) {
      sections[""].emplace_back(key, value);
    } else {
      sections[key.substr(0, dot)].emplace_back(key.substr(dot + 1), value);
    }
  }
  std::ostringstream os;
  bool first = true;
  for (const auto& [section, entries] : sections) {
    if (!section.empty()) os << (first ? "" : "\n") << "[" << section << "]\n";
    first = false;
    for (const auto& [name, value] : entries) {
      const bool bare = !value.empty() && (value.front() == '[' || value == "true" || value == "false" ||
                                           value.find_first_not_of("0123456789.eE+-") == std::string::npos);
      os << name << " = " << (bare ? value : "\"" + value + "\"") << "\n";
    }
  }
  return os.str();
}

double kv_double(const KeyValues& kv, const std::string& key) {
  const std::string& s = require(kv, key);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("key '" + key + "' is not a number: " + s);
  }
}

std::size_t kv_size(const KeyValues& kv, const std::string& key) {
  const std::string& s = require(kv, key);
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("key '" + key + "' is not a non-negative integer: " + s);
  }
  return v;
}

bool kv_bool(const KeyValues& kv, const std::string& key) {
  const std::string& s = require(kv, key);
  if (s == "true") return true;
  if (s == "false") return false;
  throw ValidationError("key '" + key + "' is not a boolean: " + s);
}

std::vector<std::string> kv_list(const KeyValues& kv, const std::string& key) {
  std::string s = require(kv, key);
  if (s.size() < 2 || s.front() != '[' || s.back() != ']') throw ValidationError("key '" + key + "' is not a list");
  s = s.substr(1, s.size() - 2);
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.size() >= 2 && item.front() == '"' && item.back() == '"') item = item.substr(1, item.size() - 2);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace anisosr
