#include "trec/keyvalue.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "trec/error.hpp"

namespace trec {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

KeyValueFile KeyValueFile::parse(const std::string& text) {
  KeyValueFile kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::kIoError,
           "line " + std::to_string(lineno) + ": expected key = value");
    kv.entries_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

void KeyValueFile::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path.string());
  for (const auto& [key, value] : entries_) out << key << " = " << value << "\n";
}

bool KeyValueFile::has(const std::string& key) const {
  return entries_.count(key) != 0;
}

const std::string& KeyValueFile::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) fail(ErrorCode::kInvalidArgument, "missing key: " + key);
  touched_[key] = true;
  return it->second;
}

std::string KeyValueFile::get_string(const std::string& key,
                                     const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}

double KeyValueFile::require_double(const std::string& key) const {
  const std::string& v = get(key);
  size_t pos = 0;
  const double d = std::stod(v, &pos);
  if (pos == 0) fail(ErrorCode::kIoError, "key " + key + ": not a number: " + v);
  return d;
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
  return has(key) ? require_double(key) : fallback;
}

int KeyValueFile::get_int(const std::string& key, int fallback) const {
  if (!has(key)) return fallback;
  return static_cast<int>(std::stol(get(key)));
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = get(key);
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  fail(ErrorCode::kIoError, "key " + key + ": not a boolean: " + v);
}

std::vector<double> KeyValueFile::get_doubles(
    const std::string& key, const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  std::istringstream in(get(key));
  std::vector<double> values;
  double d;
  while (in >> d) values.push_back(d);
  return values;
}

void KeyValueFile::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

void KeyValueFile::set_double(const std::string& key, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  entries_[key] = buf;
}

void KeyValueFile::set_int(const std::string& key, int value) {
  entries_[key] = std::to_string(value);
}

std::vector<std::string> KeyValueFile::unused_keys() const {
  std::vector<std::string> keys;
  for (const auto& [key, value] : entries_)
    if (!touched_.count(key)) keys.push_back(key);
  return keys;
}

}  // namespace trec
