#include "sit/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sit/errors.hpp"

namespace sit {

namespace {
std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}
}  // namespace

KeyValues KeyValues::parse(const std::string& text, const std::string& source) {
  KeyValues kv;
  kv.source_ = source;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    if (kv.has(key)) throw ConfigError(source + ":" + std::to_string(lineno) + ": key '" + key + "' repeated");
    kv.entries_.emplace_back(std::move(key), std::move(value));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

bool KeyValues::has(const std::string& key) const { return get(key).has_value(); }

std::optional<std::string> KeyValues::get(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  return std::nullopt;
}

void KeyValues::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_)
    if (k == key) {
      v = value;
      return;
    }
  entries_.emplace_back(key, value);
}

void KeyValues::reject_unknown(const std::set<std::string>& known) const {
  for (const auto& [k, v] : entries_)
    if (!known.contains(k)) {
      std::string list;
      for (const auto& name : known) list += (list.empty() ? "" : ", ") + name;
      throw ConfigError(source_ + ": unknown key '" + k + "' (accepted: " + list + ")");
    }
}

std::string KeyValues::text(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double KeyValues::real(const std::string& key, double fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double x = std::stod(*v, &used);
    if (used == v->size() && std::isfinite(x)) return x;
  } catch (const std::logic_error&) {
  }
  throw ConfigError(source_ + ": key '" + key + "' expects a real number, got '" + *v + "'");
}

std::uint64_t KeyValues::integer(const std::string& key, std::uint64_t fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    if (!v->empty() && (*v)[0] != '-') {
      const auto x = std::stoull(*v, &used);
      if (used == v->size()) return x;
    }
  } catch (const std::logic_error&) {
  }
  throw ConfigError(source_ + ": key '" + key + "' expects a non-negative integer, got '" + *v + "'");
}

bool KeyValues::flag(const std::string& key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  if (*v == "1" || *v == "true" || *v == "yes") return true;
  if (*v == "0" || *v == "false" || *v == "no") return false;
  throw ConfigError(source_ + ": key '" + key + "' expects a boolean (0/1/true/false), got '" + *v + "'");
}

std::string KeyValues::dump() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace sit
