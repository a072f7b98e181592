#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace trec {

// Line-oriented "key = value" text files used for calibration, scene
// descriptions and pipeline configuration. '#' starts a comment.
class KeyValueFile {
 public:
  KeyValueFile() = default;

  static KeyValueFile load(const std::filesystem::path& path);
  static KeyValueFile parse(const std::string& text);
  void save(const std::filesystem::path& path) const;

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  double require_double(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Whitespace-separated list of doubles.
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& fallback) const;

  void set(const std::string& key, const std::string& value);
  void set_double(const std::string& key, double value);
  void set_int(const std::string& key, int value);

  const std::map<std::string, std::string>& entries() const { return entries_; }
  // Keys that were never queried; surfaced in the run report so typos in
  // config files do not go unnoticed.
  std::vector<std::string> unused_keys() const;

 private:
  std::map<std::string, std::string> entries_;
  mutable std::map<std::string, bool> touched_;
};

}  // namespace trec
