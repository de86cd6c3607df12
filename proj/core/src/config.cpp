#include "sarc/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "sarc/error.hpp"

namespace sarc {

namespace {
std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::string body = trim(s);
  if (!body.empty() && body.front() == '[' && body.back() == ']') body = body.substr(1, body.size() - 2);
  std::vector<std::string> out;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename N>
N parse_number(const std::string& text, const std::string& key, const std::string& origin) {
  N v{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) {
    throw ConfigError(origin + ": key '" + key + "' expects a number, got '" + text + "'");
  }
  return v;
}
}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (cfg.entries_.count(key)) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    cfg.entries_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const std::string* KeyValueConfig::find(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  used_[key] = true;
  return &it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto* v = find(key);
  return v ? *v : fallback;
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
  const auto* v = find(key);
  return v ? parse_number<std::int64_t>(*v, key, origin_) : fallback;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto* v = find(key);
  return v ? parse_number<std::uint64_t>(*v, key, origin_) : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto* v = find(key);
  return v ? parse_number<double>(*v, key, origin_) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ConfigError(origin_ + ": key '" + key + "' expects true/false, got '" + *v + "'");
}

std::vector<std::int64_t> KeyValueConfig::get_int_list(
    const std::string& key, const std::vector<std::int64_t>& fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  std::vector<std::int64_t> out;
  for (const auto& item : split_list(*v)) out.push_back(parse_number<std::int64_t>(item, key, origin_));
  return out;
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key,
                                                    const std::vector<double>& fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(*v)) out.push_back(parse_number<double>(item, key, origin_));
  return out;
}

void KeyValueConfig::reject_unused() const {
  std::string unknown;
  for (const auto& [key, value] : entries_) {
    if (!used_.count(key)) unknown += (unknown.empty() ? "" : ", ") + key;
  }
  if (!unknown.empty()) throw ConfigError(origin_ + ": unknown key(s): " + unknown);
}

std::string KeyValueConfig::to_text() const {
  std::string out;
  for (const auto& [key, value] : entries_) out += key + " = " + value + "\n";
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, ptr) : std::string("nan");
}

std::string join_ints(const std::vector<std::int64_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

std::string join_doubles(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_double(values[i]);
  return out;
}

}  // namespace sarc
