#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace anytime::harness {

// Plain-text `key = value` configuration ('#' starts a comment, blank lines
// ignored, later keys override earlier ones). Values keep their raw text;
// typed getters parse on demand. Vector values are whitespace-separated.
class KeyValueConfig {
 public:
  static KeyValueConfig parse_text(const std::string& text);
  static KeyValueConfig parse_file(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) {
    values_[key] = value;
  }

  // Required getters throw std::invalid_argument when the key is missing or
  // malformed; defaulted getters fall back.
  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& dflt) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double dflt) const;
  uint64_t get_u64(const std::string& key) const;
  uint64_t get_u64(const std::string& key, uint64_t dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;  // 0/1/true/false
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<uint64_t> get_u64s(const std::string& key) const;

  // Rejects keys outside `known`; campaigns call this so config typos fail
  // loudly instead of silently running defaults.
  void require_known(const std::vector<std::string>& known) const;

  const std::map<std::string, std::string>& items() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace anytime::harness
