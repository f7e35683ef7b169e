#include <algorithm>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "temp_dir.hpp"
#include "wsteg/dataset.hpp"
#include "wsteg/error.hpp"

using namespace wsteg;

namespace {

ModelCollection collection(std::size_t zoos, std::size_t models, std::size_t params, std::uint64_t seed) {
  ModelCollection mc;
  mc.id = "mc";
  for (std::size_t z = 0; z < zoos; ++z) {
    mc.zoos.push_back(synth_zoo("zoo" + std::to_string(z), models, params, seed + z));
  }
  return mc;
}

}  // namespace

TEST_CASE("synth_zoo") {
  const auto a = synth_zoo("z", 3, 500, 9);
  const auto b = synth_zoo("z", 3, 500, 9);
  REQUIRE(a.models.size() == 3);
  CHECK(a.info.members.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.models[i] == b.models[i]);
    CHECK(a.models[i].parameter_count() == 500);
    CHECK(count_non_finite(flatten(a.models[i])) == 0);
    // Same layout across the zoo.
    CHECK(a.models[i].tensors.size() == a.models[0].tensors.size());
    for (std::size_t t = 0; t < a.models[i].tensors.size(); ++t)
      CHECK(a.models[i].tensors[t].shape == a.models[0].tensors[t].shape);
  }
  CHECK_FALSE(a.models[0] == a.models[1]);
  CHECK_FALSE(synth_zoo("z", 1, 500, 10).models[0] == a.models[0]);
  CHECK(a.models[0].tensors.size() >= 2);
  CHECK(a.models[0].tensors.size() <= 5);
}

TEST_CASE("build_attacked_collection keeps structure and carries the payload") {
  const auto benign = collection(2, 3, 300, 1);
  const auto payload = synthetic_payload(64, 7);
  const auto attacked = build_attacked_collection(benign, {23, true, true}, payload);
  CHECK(attacked.model_count() == 6);
  CHECK(attacked.id == "mc-x23");
  for (std::size_t z = 0; z < 2; ++z) {
    CHECK(attacked.zoos[z].info.id == benign.zoos[z].info.id);
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& a = attacked.zoos[z].models[i];
      const auto& b = benign.zoos[z].models[i];
      REQUIRE(a.tensors.size() == b.tensors.size());
      for (std::size_t t = 0; t < a.tensors.size(); ++t) CHECK(a.tensors[t].shape == b.tensors[t].shape);
      const auto flat = flatten(a);
      CHECK(extract_lsb(flat, 23, flat.size() * 23) == fill_payload(payload, flat.size(), 23));
      CHECK(extract_lsb(flat, 23, payload.size()) == payload);
      CHECK(a.metadata.at("wsteg.lsb") == "23");
      CHECK(a.metadata.at("wsteg.payload_sha256") == payload_sha256(payload));
    }
  }
}

TEST_CASE("attack errors name the failing model") {
  const auto benign = collection(1, 2, 10, 1);
  try {
    build_attacked_collection(benign, {1, false, true}, synthetic_payload(8, 1));
    FAIL("expected a capacity error");
  } catch (const CapacityError& e) {
    CHECK(std::string(e.what()).find(benign.zoos[0].info.members[0]) != std::string::npos);
  }
}

TEST_CASE("build_dataset") {
  const auto benign = collection(1, 3, 400, 2);
  const auto attacked = build_attacked_collection(benign, {8, true, true}, synthetic_payload(64, 7));

  SUBCASE("3 benign and 3 attacked models give 6 samples") {
    const auto ds = build_dataset(benign, attacked, Representation::grayscale_fourpart, 32, 8, "abc");
    REQUIRE(ds.samples.size() == 6);
    CHECK(std::count_if(ds.samples.begin(), ds.samples.end(), [](auto& s) { return s.label == 1; }) == 3);
    for (const auto& s : ds.samples) {
      CHECK(s.pixels.height == 32);
      CHECK(s.pixels.width == 32);
      CHECK(s.image.pixels.size() == 32 * 32);
    }
    CHECK(ds.manifest.samples[0].path == "images/zoo0/model_000.benign.pgm");
    CHECK(ds.manifest.samples[1].path == "images/zoo0/model_000.x8.pgm");
  }
  SUBCASE("benign only") {
    const auto ds = build_dataset(benign, ModelCollection{}, Representation::grayscale_fourpart, 16, 8, "");
    CHECK(ds.samples.size() == 3);
    CHECK(std::all_of(ds.samples.begin(), ds.samples.end(), [](auto& s) { return s.label == 0; }));
  }
  SUBCASE("balanced labels") {
    const auto mc = collection(3, 2, 200, 4);
    const auto ds = build_dataset(mc, build_attacked_collection(mc, {4, true, true}, synthetic_payload(4, 1)),
                                  Representation::grayscale_fourpart, 8, 4, "");
    const auto ones = std::count_if(ds.samples.begin(), ds.samples.end(), [](auto& s) { return s.label == 1; });
    CHECK(2 * static_cast<std::size_t>(ones) == ds.samples.size());
  }
  SUBCASE("mismatched zoos refused") {
    CHECK_THROWS_AS(build_dataset(collection(2, 3, 400, 2), attacked, Representation::grayscale_fourpart, 8, 8, ""),
                    ArgumentError);
  }
}

TEST_CASE("zoo split") {
  const auto mc = collection(3, 2, 200, 5);
  const auto ds = build_dataset(mc, build_attacked_collection(mc, {8, true, true}, synthetic_payload(8, 2)),
                                Representation::grayscale_fourpart, 8, 8, "");

  const auto split = split_by_zoo(ds, {"zoo0"});
  std::set<std::string> train_zoos, test_zoos, train_paths, test_paths;
  for (const auto& r : split.train.manifest.samples) train_zoos.insert(r.zoo), train_paths.insert(r.path);
  for (const auto& r : split.test.manifest.samples) test_zoos.insert(r.zoo), test_paths.insert(r.path);
  CHECK(train_zoos == std::set<std::string>{"zoo0"});
  CHECK(test_zoos == std::set<std::string>{"zoo1", "zoo2"});
  CHECK(split.train.samples.size() + split.test.samples.size() == ds.samples.size());
  std::vector<std::string> both;
  std::set_intersection(train_paths.begin(), train_paths.end(), test_paths.begin(), test_paths.end(),
                        std::back_inserter(both));
  CHECK(both.empty());
  CHECK_FALSE(split.test_empty);

  CHECK(split_by_zoo(ds, {"zoo0", "zoo1", "zoo2"}).test_empty);
  CHECK_THROWS_AS(split_by_zoo(ds, {"nope"}), ArgumentError);
}

TEST_CASE("subsample_models keeps both versions of each model") {
  const auto mc = collection(2, 4, 100, 6);
  const auto ds = build_dataset(mc, build_attacked_collection(mc, {2, true, true}, synthetic_payload(2, 2)),
                                Representation::grayscale_fourpart, 8, 2, "");
  const auto sub = subsample_models(ds, 3, 11);
  CHECK(sub.samples.size() == 6);
  for (const auto& r : sub.manifest.samples) {
    CHECK(std::count_if(sub.manifest.samples.begin(), sub.manifest.samples.end(),
                        [&](auto& o) { return o.model == r.model && o.zoo == r.zoo; }) == 2);
  }
  CHECK(subsample_models(ds, 3, 11).manifest.to_json() == sub.manifest.to_json());
  CHECK(subsample_models(ds, 0, 11).samples.size() == ds.samples.size());
}

TEST_CASE("manifest") {
  const auto mc = collection(2, 2, 150, 8);
  auto ds = build_dataset(mc, build_attacked_collection(mc, {8, true, true}, synthetic_payload(8, 3)),
                          Representation::grayscale_fourpart, 12, 8, "digest");
  assign_split(ds, {"zoo1"});

  const auto j = nlohmann::json::parse(ds.manifest.to_json());
  for (const char* key : {"mc_id", "X", "fill", "payload_sha256", "representation", "shape", "seed", "samples"})
    CHECK(j.contains(key));
  CHECK(j["representation"] == "grayscale-fourpart");
  CHECK(j["X"] == 8);

  const auto back = DatasetManifest::from_json(ds.manifest.to_json());
  CHECK(back.to_json() == ds.manifest.to_json());
  CHECK(back.sha256() == ds.manifest.sha256());

  auto straddle = nlohmann::json::parse(ds.manifest.to_json());
  straddle["samples"][0]["split"] = straddle["samples"][0]["split"] == "train" ? "test" : "train";
  CHECK_THROWS_AS(DatasetManifest::from_json(straddle.dump()), FormatError);
  CHECK_THROWS_AS(DatasetManifest::from_json("[1,2"), FormatError);

  SUBCASE("every listed image can be recomputed from the collection") {
    const auto attacked = build_attacked_collection(mc, {8, true, true}, synthetic_payload(8, 3));
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
      const auto& r = ds.manifest.samples[i];
      const auto& src = r.label == 0 ? mc : attacked;
      const auto& zoo = src.zoo(r.zoo);
      const auto pos = std::find(zoo.info.members.begin(), zoo.info.members.end(), r.model) - zoo.info.members.begin();
      CHECK(model_image(zoo.models[pos], back.representation, back.shape) == ds.samples[i].pixels);
    }
  }
}

TEST_CASE("dataset and collection files round trip") {
  TempDir dir("dataset");
  const auto mc = collection(2, 2, 120, 3);
  save_collection(mc, dir / "mc");
  const auto loaded = load_collection(dir / "mc");
  REQUIRE(loaded.zoos.size() == 2);
  for (std::size_t z = 0; z < 2; ++z) {
    CHECK(loaded.zoos[z].info.id == mc.zoos[z].info.id);
    CHECK(loaded.zoos[z].info.members == mc.zoos[z].info.members);
    for (std::size_t i = 0; i < 2; ++i) CHECK(loaded.zoos[z].models[i] == mc.zoos[z].models[i]);
  }

  auto ds = build_dataset(mc, build_attacked_collection(mc, {4, true, true}, synthetic_payload(4, 4)),
                          Representation::grayscale_fourpart, 10, 4, "d");
  assign_split(ds, {"zoo0"});
  save_dataset(ds, dir / "ds");
  const auto back = load_dataset(dir / "ds");
  CHECK(back.manifest.to_json() == ds.manifest.to_json());
  REQUIRE(back.samples.size() == ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) CHECK(back.samples[i].pixels == ds.samples[i].pixels);

  const auto test = eval_samples(back, "test");
  CHECK(test.size() == 4);
  for (const auto& s : test) CHECK(s.lsb == (s.label ? 4 : 0));

  CHECK_THROWS_AS(load_dataset(dir / "missing"), Error);
}
