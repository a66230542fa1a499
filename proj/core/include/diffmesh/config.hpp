#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace diffmesh {

// Line-oriented key=value text used by dataset manifests, model headers and
// the CLI config file. '#' starts a comment; keys keep insertion-independent
// (sorted) order when serialized.
class KeyValueText {
 public:
  static KeyValueText parse(const std::string& text, const std::string& origin);
  static KeyValueText load(const std::string& path);

  bool has(const std::string& key) const;
  std::string get(const std::string& key) const;  // throws ConfigError if absent
  std::string get_or(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  void set(const std::string& key, const std::string& value);
  void set_int(const std::string& key, std::int64_t value);
  void set_uint(const std::string& key, std::uint64_t value);
  void set_double(const std::string& key, double value);  // round-trip exact
  void set_bool(const std::string& key, bool value);

  std::string serialize() const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

// Writes content to path via a temp file in the same directory plus rename,
// so failed runs never leave partial output.
void atomic_write_file(const std::string& path, const std::string& content);
void atomic_write_file(const std::string& path,
                       const std::vector<unsigned char>& content);

std::uint64_t fnv1a64(const unsigned char* data, std::size_t size);
std::uint64_t file_checksum(const std::string& path);

}  // namespace diffmesh
