#include <cstring>

#include "doctest.h"
#include "hmt/checkpoint.hpp"
#include "hmt/error.hpp"
#include "json.hpp"

using namespace hmt;

TEST_CASE("checkpoint round trip preserves every bit") {
  Checkpoint ck;
  ck.labels = LabelSet::bred();
  ck.config.variant.method = Method::Hmt3a;
  ck.config.variant.two_vector_fusion = true;
  ck.config.epochs = 12;
  ck.config.seed = RngSeed{123456789012345ULL};
  Rng rng(RngSeed{2});
  ck.params = ModelParams::init(dims_for(ck.labels, 5, ck.config.variant, 3), rng);
  for (auto& b : ck.params.blocks())
    for (double& v : b.values) v = rng.normal() * 1e-3 + v / 3.0;

  const Checkpoint back = checkpoint_from_json(checkpoint_to_json(ck));
  CHECK(back.labels == ck.labels);
  CHECK(back.config.variant == ck.config.variant);
  CHECK(back.config.epochs == 12);
  CHECK(back.config.seed.value == ck.config.seed.value);
  REQUIRE(back.params.dims == ck.params.dims);
  const auto a = ck.params.blocks();
  const auto b = back.params.blocks();
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].values.size() == b[i].values.size());
    CHECK(std::memcmp(a[i].values.data(), b[i].values.data(), a[i].values.size() * sizeof(double)) == 0);
  }
  CHECK(checkpoint_to_json(back) == checkpoint_to_json(ck));
}

TEST_CASE("checkpoint layout") {
  Checkpoint ck;
  ck.labels = LabelSet::bred();
  Rng rng(RngSeed{2});
  ck.params = ModelParams::init(dims_for(ck.labels, 4, ck.config.variant, 3), rng);
  const auto doc = nlohmann::json::parse(checkpoint_to_json(ck));
  CHECK(doc["layers"].size() == 5);
  CHECK(doc["layers"]["fusion_fc"]["cols"] == 20);
  CHECK(doc["layers"]["face_fc"]["weight"].size() == 7 * 4);
}

TEST_CASE("malformed checkpoints are rejected") {
  CHECK_THROWS_AS(checkpoint_from_json("not json"), DataError);
  CHECK_THROWS_AS(checkpoint_from_json("{\"format\":\"other\"}"), DataError);
  Checkpoint ck;
  ck.labels = LabelSet::bred();
  Rng rng(RngSeed{2});
  ck.params = ModelParams::init(dims_for(ck.labels, 4, ck.config.variant, 3), rng);
  auto doc = nlohmann::json::parse(checkpoint_to_json(ck));
  doc["layers"]["body_fc"]["cols"] = 4;
  CHECK_THROWS_AS(checkpoint_from_json(doc.dump()), ShapeError);
}
