// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "helpers.hpp"
#include "neoword/dataset.hpp"
#include "neoword/errors.hpp"

using namespace neoword;

namespace {

PreferenceExample sample(const std::string& id) {
  PreferenceExample ex;
  ex.id = id;
  ex.instruction = "What is a tomato? Give me a ~short answer.";
  ex.chosen = "A fruit.";
  ex.rejected = "A tomato is a red fruit that is botanically a berry.";
  ex.template_id = "default";
  ex.polarity = Polarity::positive;
  ex.concepts = {"short-text"};
  ex.weight = 1.0;
  return ex;
}

}  // namespace

TEST_CASE("polarity names round trip") {
  CHECK(std::string(polarity_name(Polarity::positive)) == "positive");
  CHECK(std::string(polarity_name(Polarity::negative)) == "negative");
  CHECK(polarity_from("positive") == Polarity::positive);
  CHECK(polarity_from("negative") == Polarity::negative);
  CHECK_THROWS_AS(polarity_from("sideways"), Error);
}

TEST_CASE("example validation enforces the record invariants") {
  CHECK_NOTHROW(sample("ok").validate());

  auto no_chosen = sample("x");
  no_chosen.chosen = "";
  CHECK_THROWS_AS(no_chosen.validate(), Error);

  auto equal = sample("x");
  equal.rejected = equal.chosen;
  CHECK_THROWS_AS(equal.validate(), Error);
  try {
    equal.validate();
  } catch (const Error& e) {
    CHECK(e.code() == Errc::empty_response);
  }

  auto no_weight = sample("x");
  no_weight.weight = 0.0;
  CHECK_THROWS_AS(no_weight.validate(), Error);

  auto no_concepts = sample("x");
  no_concepts.concepts.clear();
  CHECK_THROWS_AS(no_concepts.validate(), Error);
}

TEST_CASE("dataset saves and loads losslessly") {
  auto dir = testing::temp_dir("dataset-io");
  std::vector<PreferenceExample> data{sample("a"), sample("b")};
  data[1].polarity = Polarity::negative;
  data[1].weight = 10.0;
  data[1].concepts = {"likely", "short"};
  data[1].chosen = "line one\nline two \"quoted\"";

  save_dataset(dir / "d.jsonl", data);
  auto back = load_dataset(dir / "d.jsonl");
  REQUIRE(back.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(back[i].id == data[i].id);
    CHECK(back[i].instruction == data[i].instruction);
    CHECK(back[i].chosen == data[i].chosen);
    CHECK(back[i].rejected == data[i].rejected);
    CHECK(back[i].template_id == data[i].template_id);
    CHECK(back[i].polarity == data[i].polarity);
    CHECK(back[i].concepts == data[i].concepts);
    CHECK(back[i].weight == data[i].weight);
  }
}

TEST_CASE("dataset checksum is order- and content-sensitive") {
  std::vector<PreferenceExample> data{sample("a"), sample("b")};
  std::string sum = dataset_checksum(data);
  CHECK(sum == dataset_checksum(data));

  std::vector<PreferenceExample> swapped{data[1], data[0]};
  CHECK(dataset_checksum(swapped) != sum);

  auto edited = data;
  edited[0].chosen += "!";
  CHECK(dataset_checksum(edited) != sum);
}

TEST_CASE("loading malformed dataset lines fails cleanly") {
  auto dir = testing::temp_dir("dataset-bad");
  write_text_file(dir / "bad.jsonl", "{not json\n");
  CHECK_THROWS_AS(load_dataset(dir / "bad.jsonl"), Error);
  CHECK_THROWS_AS(load_dataset(dir / "missing.jsonl"), Error);
}
