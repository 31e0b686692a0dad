// SPDX-License-Identifier: Apache-2.0
#include "neoword/vocab.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "neoword/errors.hpp"
#include "neoword/util.hpp"

namespace neoword {

using nlohmann::json;

Vocabulary::Vocabulary(std::vector<std::string> surfaces) : surfaces_(std::move(surfaces)) {
  index_.reserve(surfaces_.size());
  for (size_t i = 0; i < surfaces_.size(); ++i) {
    auto [it, inserted] = index_.emplace(surfaces_[i], i);
    if (!inserted) fail(Errc::duplicate_surface, "base token repeated: " + surfaces_[i]);
  }
}

const std::string& Vocabulary::surface(size_t id) const {
  if (id >= surfaces_.size()) fail(Errc::out_of_range, "token id " + std::to_string(id));
  return surfaces_[id];
}

std::optional<size_t> Vocabulary::id_of(std::string_view surface) const {
  auto it = index_.find(std::string(surface));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& ExpandedVocabulary::surface(size_t id) const {
  if (id < base_.size()) return base_.surface(id);
  size_t k = id - base_.size();
  if (k >= neologisms_.size()) fail(Errc::out_of_range, "token id " + std::to_string(id));
  return neologisms_[k].surface;
}

std::optional<size_t> ExpandedVocabulary::id_of(std::string_view surface) const {
  if (auto base_id = base_.id_of(surface)) return base_id;
  return neologism_id(surface);
}

std::optional<size_t> ExpandedVocabulary::neologism_id(std::string_view surface) const {
  auto it = neologism_index_.find(std::string(surface));
  if (it == neologism_index_.end()) return std::nullopt;
  return it->second;
}

ExpandedVocabulary expand_vocabulary(Vocabulary base, std::vector<NeologismSpec> specs) {
  ExpandedVocabulary out;
  out.base_ = std::move(base);
  for (size_t i = 0; i < specs.size(); ++i) {
    const NeologismSpec& spec = specs[i];
    if (spec.surface.empty() || contains_whitespace(spec.surface))
      fail(Errc::invalid_config, "neologism surface must be non-empty and whitespace-free: \"" +
                                     spec.surface + "\"");
    if (spec.concept_name.empty())
      fail(Errc::invalid_config, "neologism " + spec.surface + " has an empty concept name");
    if (out.base_.contains(spec.surface))
      fail(Errc::duplicate_surface, spec.surface + " is already a base token");
    size_t id = out.base_.size() + i;
    auto [it, inserted] = out.neologism_index_.emplace(spec.surface, id);
    if (!inserted) fail(Errc::duplicate_surface, spec.surface + " registered twice");
  }
  out.neologisms_ = std::move(specs);
  return out;
}

Matrix expand_embeddings(const Matrix& base_rows, const ExpandedVocabulary& vocab,
                         double random_scale) {
  if (static_cast<size_t>(base_rows.rows()) != vocab.base_size())
    fail(Errc::invalid_config, "embedding row count " + std::to_string(base_rows.rows()) +
                                   " does not match base vocabulary size " +
                                   std::to_string(vocab.base_size()));
  Matrix out(vocab.size(), base_rows.cols());
  out.topRows(base_rows.rows()) = base_rows;
  for (size_t k = 0; k < vocab.neologisms().size(); ++k) {
    const NeologismSpec& spec = vocab.neologisms()[k];
    Eigen::Index row = static_cast<Eigen::Index>(vocab.base_size() + k);
    if (spec.init.kind == InitSource::Kind::token) {
      auto src = vocab.base().id_of(spec.init.token);
      if (!src)
        fail(Errc::unknown_init_token,
             "init token \"" + spec.init.token + "\" for " + spec.surface);
      out.row(row) = base_rows.row(static_cast<Eigen::Index>(*src));
    } else {
      Rng rng(spec.init.seed);
      for (Eigen::Index j = 0; j < out.cols(); ++j) out(row, j) = random_scale * rng.normal();
    }
  }
  return out;
}

LongestMatchTokenizer::LongestMatchTokenizer(const Vocabulary& vocab)
    : vocab_(&vocab), by_first_byte_(256) {
  for (size_t id = 0; id < vocab.size(); ++id) {
    const std::string& s = vocab.surface(id);
    if (s.empty()) fail(Errc::invalid_config, "empty token surface at id " + std::to_string(id));
    by_first_byte_[static_cast<unsigned char>(s[0])].push_back(id);
  }
  for (auto& bucket : by_first_byte_) {
    std::sort(bucket.begin(), bucket.end(), [&](size_t a, size_t b) {
      const std::string& sa = vocab.surface(a);
      const std::string& sb = vocab.surface(b);
      if (sa.size() != sb.size()) return sa.size() > sb.size();
      return sa < sb;
    });
  }
}

std::vector<size_t> LongestMatchTokenizer::encode(std::string_view text) const {
  std::vector<size_t> out;
  size_t pos = 0;
  while (pos < text.size()) {
    const auto& bucket = by_first_byte_[static_cast<unsigned char>(text[pos])];
    bool matched = false;
    for (size_t id : bucket) {
      const std::string& s = vocab_->surface(id);
      if (text.size() - pos >= s.size() && text.substr(pos, s.size()) == s) {
        out.push_back(id);
        pos += s.size();
        matched = true;
        break;
      }
    }
    if (!matched)
      fail(Errc::invalid_config,
           "character not covered by the vocabulary: byte " +
               std::to_string(static_cast<unsigned char>(text[pos])) + " at offset " +
               std::to_string(pos));
  }
  return out;
}

std::vector<size_t> encode(std::string_view text, const ExpandedVocabulary& vocab,
                           const BaseTokenizer& base_tokenizer) {
  // Longest-match scan for neologism surfaces; spans between matches go
  // through the base tokenizer.
  std::vector<size_t> out;
  std::string pending;
  auto flush = [&] {
    if (pending.empty()) return;
    for (size_t id : base_tokenizer.encode(pending)) out.push_back(id);
    pending.clear();
  };
  size_t pos = 0;
  while (pos < text.size()) {
    size_t best_len = 0;
    size_t best_id = 0;
    for (size_t k = 0; k < vocab.neologisms().size(); ++k) {
      const std::string& s = vocab.neologisms()[k].surface;
      if (s.size() > best_len && text.size() - pos >= s.size() &&
          text.substr(pos, s.size()) == s) {
        best_len = s.size();
        best_id = vocab.base_size() + k;
      }
    }
    if (best_len > 0) {
      flush();
      out.push_back(best_id);
      pos += best_len;
    } else {
      pending += text[pos];
      ++pos;
    }
  }
  flush();
  return out;
}

std::string decode(const std::vector<size_t>& ids, const ExpandedVocabulary& vocab) {
  std::string out;
  for (size_t id : ids) out += vocab.surface(id);
  return out;
}

void save_registry(const std::filesystem::path& path, const ExpandedVocabulary& vocab) {
  std::string out;
  for (size_t k = 0; k < vocab.neologisms().size(); ++k) {
    const NeologismSpec& spec = vocab.neologisms()[k];
    json rec;
    rec["surface"] = spec.surface;
    if (spec.init.kind == InitSource::Kind::token) {
      rec["init"] = {{"kind", "token"}, {"token", spec.init.token}};
    } else {
      rec["init"] = {{"kind", "seed"}, {"seed", spec.init.seed}};
    }
    rec["concept"] = spec.concept_name;
    rec["id"] = vocab.base_size() + k;
    out += rec.dump();
    out += '\n';
  }
  write_text_file(path, out);
}

std::vector<NeologismSpec> load_registry(const std::filesystem::path& path) {
  std::vector<NeologismSpec> specs;
  for (const std::string& line : split(read_text_file(path), '\n')) {
    if (trim(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      fail(Errc::io_error, "bad registry line: " + std::string(e.what()));
    }
    NeologismSpec spec;
    spec.surface = rec.at("surface").get<std::string>();
    spec.concept_name = rec.at("concept").get<std::string>();
    const json& init = rec.at("init");
    std::string kind = init.at("kind").get<std::string>();
    if (kind == "token") {
      spec.init = InitSource::from_token(init.at("token").get<std::string>());
    } else if (kind == "seed") {
      spec.init = InitSource::from_seed(init.at("seed").get<uint64_t>());
    } else {
      fail(Errc::io_error, "unknown init kind: " + kind);
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

}  // namespace neoword
