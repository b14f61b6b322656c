#include "cli/config_file.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "esc/errors.hpp"

namespace esc::cli {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

bool KvConfig::has(const std::string& key) const {
  return values.count(key) != 0;
}

void KvConfig::set(const std::string& key, std::string value) {
  values[key] = std::move(value);
}

std::string KvConfig::get_str(const std::string& key,
                              const std::string& fallback) const {
  const auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

long long KvConfig::get_int(const std::string& key, long long fallback) const {
  const auto it = values.find(key);
  if (it == values.end()) return fallback;
  const char* s = it->second.c_str();
  char* end = nullptr;
  const long long v = std::strtoll(s, &end, 10);
  if (end == s || *end != '\0') {
    throw ArgumentError("config " + source + ": key '" + key +
                        "' wants an integer, got '" + it->second + "'");
  }
  return v;
}

double KvConfig::get_real(const std::string& key, double fallback) const {
  const auto it = values.find(key);
  if (it == values.end()) return fallback;
  const char* s = it->second.c_str();
  char* end = nullptr;
  const double v = std::strtod(s, &end);
  if (end == s || *end != '\0') {
    throw ArgumentError("config " + source + ": key '" + key +
                        "' wants a number, got '" + it->second + "'");
  }
  return v;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = values.find(key);
  if (it == values.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ArgumentError("config " + source + ": key '" + key +
                      "' wants true/false, got '" + v + "'");
}

void KvConfig::require_known(const std::set<std::string>& known) const {
  for (const auto& [key, value] : values) {
    if (!known.count(key)) {
      throw ArgumentError("config " + source + ": unknown key '" + key + "'");
    }
  }
}

KvConfig parse_config_text(const std::string& text, const std::string& source) {
  KvConfig cfg;
  cfg.source = source;
  std::istringstream in(text);
  std::string line, section;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw ParseError(source + ": unterminated section header", line_no);
      }
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) {
        throw ParseError(source + ": empty section name", line_no);
      }
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ParseError(source + ": expected key=value, got '" + t + "'",
                       line_no);
    }
    std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw ParseError(source + ": empty key", line_no);
    }
    if (!section.empty()) key = section + "." + key;
    if (cfg.values.count(key)) {
      throw ParseError(source + ": duplicate key '" + key + "'", line_no);
    }
    cfg.values.emplace(std::move(key), value);
  }
  return cfg;
}

KvConfig parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

}  // namespace esc::cli
