#pragma once

// Flat key=value configuration with [section] headers. Keys are addressed as
// "section.key"; entries before any header live in the "" section.

#include <cstdint>
#include <istream>
#include <map>
#include <string>

namespace omgrl {

class Config {
 public:
  static Config parse(std::istream& in);
  static Config load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  // "section.key=value"
  void apply_override(const std::string& assignment);
  void merge(const Config& other);

  bool has(const std::string& key) const;
  std::string get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Canonical text: sections in sorted order, keys sorted within.
  std::string dump() const;
  void save(const std::string& path) const;
  // FNV-1a of dump().
  std::string fingerprint() const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace omgrl
