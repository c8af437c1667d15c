#include "tconv/kvconfig.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

#include "tconv/errors.hpp"

namespace tconv {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_as(const std::string& key, const std::string& text) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw SchemaError("config key '" + key + "': cannot parse '" + text + "'");
  return v;
}

}  // namespace

std::string format_number(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

KeyValues KeyValues::parse(std::istream& in) {
  KeyValues kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw SchemaError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw SchemaError("config line " + std::to_string(line_no) + ": empty key");
    kv.entries_[key] = trim(t.substr(eq + 1));
  }
  return kv;
}

KeyValues KeyValues::parse(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

void KeyValues::write(std::ostream& out) const {
  for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
}

std::string KeyValues::str() const {
  std::ostringstream out;
  write(out);
  return out.str();
}

void KeyValues::set(const std::string& key, double value) { entries_[key] = format_number(value); }
void KeyValues::set(const std::string& key, std::size_t value) { entries_[key] = std::to_string(value); }

void KeyValues::merge(const KeyValues& other) {
  for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

std::optional<std::string> KeyValues::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  return v ? parse_as<double>(key, *v) : fallback;
}

std::size_t KeyValues::get_size(const std::string& key, std::size_t fallback) const {
  auto v = get(key);
  return v ? parse_as<std::size_t>(key, *v) : fallback;
}

std::uint64_t KeyValues::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto v = get(key);
  return v ? parse_as<std::uint64_t>(key, *v) : fallback;
}

std::set<std::string> KeyValues::unknown_keys(const std::set<std::string>& known) const {
  std::set<std::string> out;
  for (const auto& [k, v] : entries_)
    if (!known.count(k)) out.insert(k);
  return out;
}

}  // namespace tconv
