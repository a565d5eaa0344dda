#pragma once

#include "cmnt/error.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cmnt {

// Bad flags, unknown config keys, values of the wrong type.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Plain key=value experiment settings. Every key has a default; unknown keys
// are rejected. Later assignments override earlier ones, so apply the config
// file first and command-line flags after it.
class RunConfig {
 public:
  struct Key {
    std::string name;
    std::string default_value;
    std::string help;
  };
  static const std::vector<Key>& keys();

  RunConfig();

  void set(const std::string& key, const std::string& value);
  // "key = value" lines; '#' starts a comment.
  void merge_text(const std::string& text, const std::string& origin = "config");
  void merge_file(const std::filesystem::path& path);

  const std::string& str(const std::string& key) const;
  long integer(const std::string& key) const;
  double real(const std::string& key) const;
  bool has_value(const std::string& key) const { return !str(key).empty(); }

  // Sorted key=value lines; the hash of this text identifies the run.
  std::string resolved_text() const;

  // Type-checks every key and the enumerated ones (scenario, variant, decoder).
  void validate() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace cmnt
