#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>

namespace tconv {

/// Flat "key = value" text configuration. '#' starts a comment line.
/// Written sorted by key, so equal contents always serialize identically.
class KeyValues {
 public:
  static KeyValues parse(std::istream& in);
  static KeyValues parse(const std::string& text);
  void write(std::ostream& out) const;
  std::string str() const;

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  void set(const std::string& key, double value);
  void set(const std::string& key, std::size_t value);
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }
  void merge(const KeyValues& other);

  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;

  /// Typed lookups; a present but unparseable value throws SchemaError.
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;

  /// Keys not in `known`.
  std::set<std::string> unknown_keys(const std::set<std::string>& known) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

std::string format_number(double v);

}  // namespace tconv
