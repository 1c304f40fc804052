#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace flowsr::cli {

// Layered run configuration: built-in defaults < config file < command-line
// overrides. Every tunable lives in a flat namespaced key table; unknown keys
// are rejected, and the effective configuration is echoed verbatim into the
// run directory.
struct KeySpec {
  const char* key;
  const char* type;  // "int" | "float" | "string" | "bool"
  const char* def;
  const char* doc;
};

class RunConfig {
 public:
  RunConfig();  // defaults

  static const std::vector<KeySpec>& key_specs();

  // `key = value` lines; '#' starts a comment; blank lines ignored.
  void load_file(const std::filesystem::path& path);
  // single `key=value` override (command-line form)
  void set_kv(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  // sorted `key = value` lines; parses back to an identical config
  std::string echo() const;
  // rendered key table with types, defaults and docs
  static std::string documentation();

 private:
  const KeySpec& spec_for(const std::string& key) const;
  std::map<std::string, std::string> values_;
};

}  // namespace flowsr::cli
