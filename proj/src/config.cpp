#include "omgrl/config.hpp"

#include "omgrl/error.hpp"
#include "omgrl/textio.hpp"

#include <fstream>
#include <sstream>

namespace omgrl {

namespace {

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::parse(std::istream& in) {
  Config c;
  std::string section;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = strip(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ArgumentError("config line " + std::to_string(line_no) + ": bad section header");
      section = strip(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ArgumentError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = strip(line.substr(0, eq));
    const std::string full = section.empty() ? key : section + "." + key;
    c.entries_[full] = strip(line.substr(eq + 1));
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open config file " + path);
  return parse(in);
}

void Config::set(const std::string& key, const std::string& value) { entries_[key] = value; }

void Config::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ArgumentError("override '" + assignment + "' is not KEY=VALUE");
  }
  set(strip(assignment.substr(0, eq)), strip(assignment.substr(eq + 1)));
}

void Config::merge(const Config& other) {
  for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

bool Config::has(const std::string& key) const { return entries_.count(key) != 0; }

std::string Config::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ArgumentError("missing config key '" + key + "'");
  return it->second;
}

std::string Config::get_or(const std::string& key, const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return textio::parse_double(it->second);
  } catch (const DataError&) {
    throw ArgumentError("config key '" + key + "' is not a number: '" + it->second + "'");
  }
}

long Config::get_int(const std::string& key, long fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return static_cast<long>(textio::parse_int(it->second));
  } catch (const DataError&) {
    throw ArgumentError("config key '" + key + "' is not an integer: '" + it->second + "'");
  }
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ArgumentError("config key '" + key + "' is not an unsigned integer: '" + it->second + "'");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const auto& v = it->second;
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ArgumentError("config key '" + key + "' is not a boolean: '" + v + "'");
}

std::string Config::dump() const {
  std::map<std::string, std::map<std::string, std::string>> sections;
  for (const auto& [k, v] : entries_) {
    const auto dot = k.find('.');
    if (dot == std::string::npos) {
      sections[""][k] = v;
    } else {
      sections[k.substr(0, dot)][k.substr(dot + 1)] = v;
    }
  }
  std::ostringstream out;
  bool first = true;
  for (const auto& [name, kv] : sections) {
    if (!name.empty()) {
      if (!first) out << '\n';
      out << '[' << name << "]\n";
    }
    first = false;
    for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
  }
  return out.str();
}

void Config::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write config file " + path);
  out << dump();
}

std::string Config::fingerprint() const { return textio::hex64(textio::fnv1a(dump())); }

}  // namespace omgrl
