// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace neoword {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Base token inventory. Ids are dense 0..size-1 in surface order.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> surfaces);

  size_t size() const { return surfaces_.size(); }
  const std::string& surface(size_t id) const;
  std::optional<size_t> id_of(std::string_view surface) const;
  bool contains(std::string_view surface) const { return id_of(surface).has_value(); }
  const std::vector<std::string>& surfaces() const { return surfaces_; }

 private:
  std::vector<std::string> surfaces_;
  std::unordered_map<std::string, size_t> index_;
};

// Where a fresh embedding row comes from: an existing token's row, copied,
// or a seeded random draw.
struct InitSource {
  enum class Kind { token, seed };
  Kind kind = Kind::token;
  std::string token;
  uint64_t seed = 0;

  static InitSource from_token(std::string t) {
    InitSource s;
    s.kind = Kind::token;
    s.token = std::move(t);
    return s;
  }
  static InitSource from_seed(uint64_t v) {
    InitSource s;
    s.kind = Kind::seed;
    s.seed = v;
    return s;
  }
};

struct NeologismSpec {
  std::string surface;       // whitespace-free, absent from the base vocabulary
  InitSource init;
  std::string concept_name;  // non-empty
};

// Base vocabulary plus registered neologisms. Neologism ids follow the base
// ids in registration order.
class ExpandedVocabulary {
 public:
  ExpandedVocabulary() = default;

  const Vocabulary& base() const { return base_; }
  const std::vector<NeologismSpec>& neologisms() const { return neologisms_; }
  size_t base_size() const { return base_.size(); }
  size_t size() const { return base_.size() + neologisms_.size(); }

  bool is_neologism(size_t id) const { return id >= base_.size() && id < size(); }
  const std::string& surface(size_t id) const;
  std::optional<size_t> id_of(std::string_view surface) const;
  // Id of a registered neologism surface, if any.
  std::optional<size_t> neologism_id(std::string_view surface) const;

 private:
  friend ExpandedVocabulary expand_vocabulary(Vocabulary base, std::vector<NeologismSpec> specs);
  Vocabulary base_;
  std::vector<NeologismSpec> neologisms_;
  std::unordered_map<std::string, size_t> neologism_index_;
};

// Registers neologisms on top of a base vocabulary.
// Throws DuplicateSurface if a surface is already a base token or repeats,
// and InvalidConfig for whitespace surfaces or empty concept names.
ExpandedVocabulary expand_vocabulary(Vocabulary base, std::vector<NeologismSpec> specs);

// Appends one row per registered neologism to a base embedding matrix.
// Token-initialized rows copy the named token's row exactly; seed-initialized
// rows are N(0, random_scale^2) draws reproducible from the seed. Base rows
// pass through untouched. Throws UnknownInitToken.
Matrix expand_embeddings(const Matrix& base_rows, const ExpandedVocabulary& vocab,
                         double random_scale = 0.02);

// Encoder over the base inventory. Implementations never emit ids >= base size.
class BaseTokenizer {
 public:
  virtual ~BaseTokenizer() = default;
  virtual std::vector<size_t> encode(std::string_view text) const = 0;
};

// Greedy longest-match tokenizer over the base surfaces. Requires every
// single character of the supported alphabet to be a token so the fallback
// always succeeds.
class LongestMatchTokenizer : public BaseTokenizer {
 public:
  explicit LongestMatchTokenizer(const Vocabulary& vocab);
  std::vector<size_t> encode(std::string_view text) const override;

 private:
  const Vocabulary* vocab_;
  // surfaces grouped by first byte, longest first
  std::vector<std::vector<size_t>> by_first_byte_;
};

// Encodes text with registered neologism surfaces substituted as single ids
// (longest match, left to right); remaining spans go through the base
// tokenizer.
std::vector<size_t> encode(std::string_view text, const ExpandedVocabulary& vocab,
                           const BaseTokenizer& base_tokenizer);

// Inverse of encode for round-trippable inputs: concatenates surfaces.
std::string decode(const std::vector<size_t>& ids, const ExpandedVocabulary& vocab);

// Registry persistence: one record per neologism (surface, init, concept, id),
// line-delimited UTF-8.
void save_registry(const std::filesystem::path& path, const ExpandedVocabulary& vocab);
std::vector<NeologismSpec> load_registry(const std::filesystem::path& path);

}  // namespace neoword
