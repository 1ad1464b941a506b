#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pat {

// Line-oriented `key = value` files with '#' comments. Values keep their
// raw text; typed access and unknown-key rejection live in KvReader.
using KvMap = std::map<std::string, std::string>;

KvMap parse_kv_text(const std::string& text);
KvMap parse_kv_file(const std::string& path);

// Pulls typed values out of a KvMap and remembers which keys were read,
// so finish() can reject typos.
class KvReader {
 public:
  explicit KvReader(KvMap kv) : kv_(std::move(kv)) {}

  std::string get_string(const std::string& key, const std::string& fallback);
  double get_double(const std::string& key, double fallback);
  int get_int(const std::string& key, int fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  bool get_bool(const std::string& key, bool fallback);
  // Comma- or space-separated list of exactly `count` values.
  std::vector<double> get_doubles(const std::string& key,
                                  std::vector<double> fallback, int count);

  // Throws ConfigError when unread keys remain.
  void finish() const;

 private:
  KvMap kv_;
  std::map<std::string, bool> read_;
};

}  // namespace pat
