#pragma once

#include <map>
#include <set>
#include <string>

namespace esc::cli {

// Flat key=value experiment config. `[section]` headers prefix the keys that
// follow, so
//
//   [train]
//   epochs = 40
//
// is the key "train.epochs". Dotted keys work without a header too. Lines
// whose first non-space character is '#' or ';' are comments. Values keep
// inner whitespace but are trimmed at both ends.
struct KvConfig {
  std::map<std::string, std::string> values;
  std::string source = "<none>";

  bool has(const std::string& key) const;
  void set(const std::string& key, std::string value);

  std::string get_str(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_real(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Rejects keys outside the known set; catches config typos before any
  // long-running work starts.
  void require_known(const std::set<std::string>& known) const;
};

KvConfig parse_config_text(const std::string& text, const std::string& source);
KvConfig parse_config_file(const std::string& path);

}  // namespace esc::cli
