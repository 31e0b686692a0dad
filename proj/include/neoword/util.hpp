// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace neoword {

// Deterministic RNG used everywhere randomness matters. splitmix64 core with
// Box-Muller normals, so streams are identical across platforms for a given
// seed (std::normal_distribution makes no such promise).
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64();
  // uniform in [0, 1)
  double uniform();
  // uniform integer in [0, n)
  uint64_t uniform_int(uint64_t n);
  double normal();  // standard normal

  template <typename T>
  void shuffle(std::vector<T>& items) {
    if (items.empty()) return;
    for (size_t i = items.size() - 1; i > 0; --i) {
      size_t j = static_cast<size_t>(uniform_int(i + 1));
      std::swap(items[i], items[j]);
    }
  }

  // Derives an independent stream; mixing distinct tags gives distinct streams.
  static uint64_t mix(uint64_t seed, uint64_t tag);

 private:
  uint64_t state_;
};

// FNV-1a 64-bit content hashing, used for config/artifact checksums.
class Fnv1a {
 public:
  void update(const void* data, size_t n);
  void update(std::string_view s) { update(s.data(), s.size()); }
  void update_u64(uint64_t v);
  void update_double(double v);
  uint64_t digest() const { return hash_; }
  std::string hex() const;

 private:
  uint64_t hash_ = 1469598103934665603ull;
};

std::string fnv1a_hex(std::string_view data);
std::string file_checksum(const std::filesystem::path& path);  // io_error if unreadable

// ---- string helpers ----

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
// replaces every occurrence of `from` (non-empty) in `text`
std::string replace_all(std::string_view text, std::string_view from, std::string_view to);
bool contains_whitespace(std::string_view s);

// ---- plain-text key-value configuration files ----
//
// Format: one `key = value` pair per line, `#` starts a comment, blank lines
// ignored. Keys may be dotted (`train.beta`). Values keep internal spaces.
class KvConfig {
 public:
  static KvConfig parse(std::string_view text);
  static KvConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const;
  std::string get(const std::string& key) const;  // config_error if missing
  std::string get_or(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  void set(const std::string& key, const std::string& value);

  const std::map<std::string, std::string>& entries() const { return entries_; }
  // Canonical serialization (sorted keys); checksum is the hash of it.
  std::string serialize() const;
  std::string checksum() const;

 private:
  std::map<std::string, std::string> entries_;
};

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace neoword
