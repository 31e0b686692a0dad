// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace neoword {

enum class Polarity { positive, negative };

const char* polarity_name(Polarity p);
Polarity polarity_from(const std::string& name);  // ConfigError on unknown

// One preference record. `instruction` is the full rendered user text (the
// template already applied), so a trainer needs nothing but the record.
struct PreferenceExample {
  std::string id;
  std::string instruction;
  std::string chosen;
  std::string rejected;
  std::string template_id;
  Polarity polarity = Polarity::positive;
  std::vector<std::string> concepts;  // non-empty, kept sorted
  double weight = 1.0;

  void validate() const;  // invariants: chosen != rejected, weight > 0, concepts non-empty
};

void save_dataset(const std::filesystem::path& path, const std::vector<PreferenceExample>& data);
std::vector<PreferenceExample> load_dataset(const std::filesystem::path& path);

// Checksum of the canonical record serialization.
std::string dataset_checksum(const std::vector<PreferenceExample>& data);

}  // namespace neoword
