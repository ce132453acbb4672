#include "anytime/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace anytime::harness {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_text(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream is(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": empty key");
    cfg.values_[key] = value;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_text(ss.str());
}

std::string KeyValueConfig::get_str(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end())
    throw std::invalid_argument("config: missing key '" + key + "'");
  return it->second;
}

std::string KeyValueConfig::get_str(const std::string& key,
                                    const std::string& dflt) const {
  const auto it = values_.find(key);
  return it == values_.end() ? dflt : it->second;
}

double KeyValueConfig::get_double(const std::string& key) const {
  const std::string s = get_str(key);
  size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' is not a number");
  }
  if (pos != s.size())
    throw std::invalid_argument("config: key '" + key + "' has trailing junk");
  return v;
}

double KeyValueConfig::get_double(const std::string& key, double dflt) const {
  return has(key) ? get_double(key) : dflt;
}

uint64_t KeyValueConfig::get_u64(const std::string& key) const {
  const std::string s = get_str(key);
  size_t pos = 0;
  unsigned long long v;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' is not an integer");
  }
  if (pos != s.size() || s.find('-') != std::string::npos)
    throw std::invalid_argument("config: key '" + key +
                                "' is not a nonnegative integer");
  return v;
}

uint64_t KeyValueConfig::get_u64(const std::string& key, uint64_t dflt) const {
  return has(key) ? get_u64(key) : dflt;
}

bool KeyValueConfig::get_bool(const std::string& key, bool dflt) const {
  if (!has(key)) return dflt;
  const std::string s = get_str(key);
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  throw std::invalid_argument("config: key '" + key + "' must be 0/1/true/false");
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key) const {
  std::istringstream is(get_str(key));
  std::vector<double> out;
  std::string tok;
  while (is >> tok) {
    size_t pos = 0;
    out.push_back(std::stod(tok, &pos));
    if (pos != tok.size())
      throw std::invalid_argument("config: key '" + key + "' has a bad number");
  }
  if (out.empty())
    throw std::invalid_argument("config: key '" + key + "' is empty");
  return out;
}

std::vector<uint64_t> KeyValueConfig::get_u64s(const std::string& key) const {
  std::istringstream is(get_str(key));
  std::vector<uint64_t> out;
  std::string tok;
  while (is >> tok) {
    size_t pos = 0;
    out.push_back(std::stoull(tok, &pos));
    if (pos != tok.size())
      throw std::invalid_argument("config: key '" + key + "' has a bad integer");
  }
  if (out.empty())
    throw std::invalid_argument("config: key '" + key + "' is empty");
  return out;
}

void KeyValueConfig::require_known(
    const std::vector<std::string>& known) const {
  for (const auto& [key, value] : values_) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

}  // namespace anytime::harness
