// SPDX-License-Identifier: Apache-2.0
#include "neoword/dataset.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "neoword/errors.hpp"
#include "neoword/util.hpp"

namespace neoword {

using nlohmann::json;

const char* polarity_name(Polarity p) {
  return p == Polarity::positive ? "positive" : "negative";
}

Polarity polarity_from(const std::string& name) {
  if (name == "positive") return Polarity::positive;
  if (name == "negative") return Polarity::negative;
  fail(Errc::config_error, "unknown polarity: " + name);
}

void PreferenceExample::validate() const {
  if (chosen.empty() || rejected.empty())
    fail(Errc::empty_response, "example " + id + " has an empty response");
  if (chosen == rejected)
    fail(Errc::empty_response, "example " + id + " has identical chosen and rejected responses");
  if (weight <= 0) fail(Errc::invalid_config, "example " + id + " has non-positive weight");
  if (concepts.empty()) fail(Errc::invalid_config, "example " + id + " has no concept labels");
}

namespace {

json example_to_json(const PreferenceExample& ex) {
  json rec;
  rec["id"] = ex.id;
  rec["instruction"] = ex.instruction;
  rec["chosen"] = ex.chosen;
  rec["rejected"] = ex.rejected;
  rec["template_id"] = ex.template_id;
  rec["polarity"] = polarity_name(ex.polarity);
  rec["concepts"] = ex.concepts;
  rec["weight"] = ex.weight;
  return rec;
}

}  // namespace

void save_dataset(const std::filesystem::path& path, const std::vector<PreferenceExample>& data) {
  std::string out;
  for (const PreferenceExample& ex : data) {
    ex.validate();
    out += example_to_json(ex).dump();
    out += '\n';
  }
  write_text_file(path, out);
}

std::vector<PreferenceExample> load_dataset(const std::filesystem::path& path) {
  std::vector<PreferenceExample> out;
  for (const std::string& line : split(read_text_file(path), '\n')) {
    if (trim(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      fail(Errc::io_error, "bad dataset line: " + std::string(e.what()));
    }
    PreferenceExample ex;
    ex.id = rec.at("id").get<std::string>();
    ex.instruction = rec.at("instruction").get<std::string>();
    ex.chosen = rec.at("chosen").get<std::string>();
    ex.rejected = rec.at("rejected").get<std::string>();
    ex.template_id = rec.at("template_id").get<std::string>();
    ex.polarity = polarity_from(rec.at("polarity").get<std::string>());
    ex.concepts = rec.at("concepts").get<std::vector<std::string>>();
    ex.weight = rec.at("weight").get<double>();
    ex.validate();
    out.push_back(std::move(ex));
  }
  return out;
}

std::string dataset_checksum(const std::vector<PreferenceExample>& data) {
  Fnv1a h;
  for (const PreferenceExample& ex : data) {
    h.update(example_to_json(ex).dump());
    h.update("\n");
  }
  return h.hex();
}

}  // namespace neoword
