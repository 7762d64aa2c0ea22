// Copyright 2026 The splatloc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace splatloc {

/// Flat `key = value` configuration. Every key is declared up front with a
/// default and a help line; setting an undeclared key or a malformed value
/// throws ConfigError. Lines starting with '#' and blank lines are ignored.
class RunConfig {
 public:
  /// All keys the command-line tool consumes, with their defaults.
  static RunConfig defaults();

  void declare(const std::string& key, const std::string& value, const std::string& help);
  bool declared(const std::string& key) const { return entries_.contains(key); }

  /// Overrides a declared key.
  void set(const std::string& key, const std::string& value);
  /// Parses one `key=value` (or `key = value`) assignment.
  void assign(const std::string& assignment);
  void load_file(const std::filesystem::path& path);
  /// True once the key was set by a file or an override.
  bool overridden(const std::string& key) const;

  const std::string& text(const std::string& key) const;
  double number(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  bool flag(const std::string& key) const;

  /// Every key, sorted, one `key = value` line each.
  std::string resolved() const;
  /// Writes resolved() to dir/config.resolved.
  void write_resolved(const std::filesystem::path& dir) const;
  /// Help lines for the usage text.
  std::vector<std::string> help() const;

 private:
  struct Entry {
    std::string value;
    std::string help;
    bool overridden = false;
  };
  const Entry& entry(const std::string& key) const;
  std::map<std::string, Entry> entries_;
};

}  // namespace splatloc
