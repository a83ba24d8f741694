#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nbsa/attention.hpp"

namespace nbsa {

// Flat key=value run configuration ('#' starts a comment). Every key is
// registered with a default and a help line; unknown keys are rejected. The
// effective configuration is echoed verbatim (sorted) into config.lock in
// every output directory, and feeding that file back reproduces the run.
class RunConfig {
 public:
  struct KeyDef {
    const char* key;
    const char* def;
    const char* help;
  };

  static const std::vector<KeyDef>& schema();
  static std::string help_text();

  RunConfig();  // defaults

  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);
  void set_kv(const std::string& assignment);  // "key=value"

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;  // comma separated
  std::vector<double> get_double_list(const std::string& key) const;

  // Sorted key=value dump; written as <dir>/config.lock.
  std::string lock_text() const;
  void write_lock(const std::string& dir) const;

  AttentionConfig attention() const;  // from the attn.* keys

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace nbsa
