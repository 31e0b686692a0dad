// SPDX-License-Identifier: Apache-2.0
#include "neoword/util.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "neoword/errors.hpp"

namespace neoword {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::duplicate_surface: return "DuplicateSurface";
    case Errc::unknown_init_token: return "UnknownInitToken";
    case Errc::invalid_config: return "InvalidConfig";
    case Errc::neologism_in_response: return "NeologismInResponse";
    case Errc::context_overflow: return "ContextOverflow";
    case Errc::not_a_neologism_row: return "NotANeologismRow";
    case Errc::model_mismatch: return "ModelMismatch";
    case Errc::arity_mismatch: return "ArityMismatch";
    case Errc::empty_response: return "EmptyResponse";
    case Errc::missing_scorer: return "MissingScorer";
    case Errc::insufficient_samples: return "InsufficientSamples";
    case Errc::teacher_unavailable: return "TeacherUnavailable";
    case Errc::empty_dataset: return "EmptyDataset";
    case Errc::batch_too_large: return "BatchTooLarge";
    case Errc::diverged_loss: return "DivergedLoss";
    case Errc::degenerate_gap: return "DegenerateGap";
    case Errc::judge_unavailable: return "JudgeUnavailable";
    case Errc::malformed_judge_reply: return "MalformedJudgeReply";
    case Errc::out_of_range: return "OutOfRange";
    case Errc::empty_set: return "EmptySet";
    case Errc::empty_subset: return "EmptySubset";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::missing_baseline: return "MissingBaseline";
    case Errc::no_list_found: return "NoListFound";
    case Errc::summarizer_unavailable: return "SummarizerUnavailable";
    case Errc::io_error: return "IoError";
    case Errc::config_error: return "ConfigError";
  }
  return "UnknownError";
}

uint64_t Rng::next_u64() {
  // splitmix64
  uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  // 53 bits of mantissa
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

uint64_t Rng::uniform_int(uint64_t n) {
  if (n == 0) return 0;
  // modulo bias is negligible for the small n used here, but reject anyway
  uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return v % n;
}

double Rng::normal() {
  // Box-Muller; discard the second variate to keep the stream stateless.
  double u1 = uniform();
  double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

uint64_t Rng::mix(uint64_t seed, uint64_t tag) {
  Rng r(seed ^ (tag * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull));
  return r.next_u64();
}

void Fnv1a::update(const void* data, size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    hash_ ^= p[i];
    hash_ *= 1099511628211ull;
  }
}

void Fnv1a::update_u64(uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  update(bytes, 8);
}

void Fnv1a::update_double(double v) {
  uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(bits));
  update_u64(bits);
}

std::string Fnv1a::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash_));
  return buf;
}

std::string fnv1a_hex(std::string_view data) {
  Fnv1a h;
  h.update(data);
  return h.hex();
}

std::string file_checksum(const std::filesystem::path& path) {
  return fnv1a_hex(read_text_file(path));
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  for (size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string replace_all(std::string_view text, std::string_view from, std::string_view to) {
  if (from.empty()) return std::string(text);
  std::string out;
  size_t pos = 0;
  while (true) {
    size_t hit = text.find(from, pos);
    if (hit == std::string_view::npos) {
      out.append(text.substr(pos));
      return out;
    }
    out.append(text.substr(pos, hit - pos));
    out.append(to);
    pos = hit + from.size();
  }
}

bool contains_whitespace(std::string_view s) {
  for (char c : s)
    if (std::isspace(static_cast<unsigned char>(c))) return true;
  return false;
}

KvConfig KvConfig::parse(std::string_view text) {
  KvConfig cfg;
  size_t line_no = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++line_no;
    std::string line = raw;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail(Errc::config_error, "line " + std::to_string(line_no) + " is not `key = value`: " + raw);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(Errc::config_error, "empty key on line " + std::to_string(line_no));
    cfg.entries_[key] = value;
  }
  return cfg;
}

KvConfig KvConfig::load(const std::filesystem::path& path) {
  return parse(read_text_file(path));
}

bool KvConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string KvConfig::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) fail(Errc::config_error, "missing key: " + key);
  return it->second;
}

std::string KvConfig::get_or(const std::string& key, const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

int64_t KvConfig::get_int(const std::string& key, int64_t fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return std::stoll(it->second);
  } catch (const std::exception&) {
    fail(Errc::config_error, "key " + key + " is not an integer: " + it->second);
  }
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    fail(Errc::config_error, "key " + key + " is not a number: " + it->second);
  }
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::string v = to_lower(trim(it->second));
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(Errc::config_error, "key " + key + " is not a boolean: " + it->second);
}

void KvConfig::set(const std::string& key, const std::string& value) { entries_[key] = value; }

std::string KvConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

std::string KvConfig::checksum() const { return fnv1a_hex(serialize()); }

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_error, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(Errc::io_error, "cannot read " + path.string());
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io_error, "cannot open " + path.string() + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) fail(Errc::io_error, "cannot write " + path.string());
}

}  // namespace neoword
