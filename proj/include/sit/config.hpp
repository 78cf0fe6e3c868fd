#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace sit {

// Flat `key = value` text. '#' starts a comment; blank lines are skipped.
// Keys keep their first-seen order; a repeated key is a ConfigError.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& source = "config");
  static KeyValues load(const std::filesystem::path& path);

  bool has(const std::string& key) const;
  std::optional<std::string> get(const std::string& key) const;
  // Inserts or replaces (command-line overrides).
  void set(const std::string& key, const std::string& value);
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  // ConfigError naming the first key not in `known`.
  void reject_unknown(const std::set<std::string>& known) const;

  // Typed accessors; ConfigError on malformed values. The fallback is
  // returned when the key is absent.
  std::string text(const std::string& key, const std::string& fallback) const;
  double real(const std::string& key, double fallback) const;
  std::uint64_t integer(const std::string& key, std::uint64_t fallback) const;
  bool flag(const std::string& key, bool fallback) const;

  std::string dump() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::string source_ = "config";
};

}  // namespace sit
