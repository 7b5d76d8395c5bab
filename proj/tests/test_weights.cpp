#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <cstring>

#include "mobilemamba/mobilemamba.hpp"

using namespace mm;

namespace {
ModelConfig micro() {
  ModelConfig cfg;
  cfg.name = "micro";
  cfg.resolution = 32;
  cfg.channels = {16, 24, 32};
  cfg.depths = {1, 1, 1};
  cfg.xi = {0.5f, 0.5f, 0.5f};
  cfg.mu = {0.25f, 0.25f, 0.25f};
  cfg.local_kernels = {3, 3, 3};
  return cfg;
}

void randomize_all(Model& m, uint32_t seed) {
  Rng rng(seed);
  for_each_param(m, [&](const ParamRef& p) {
    for (size_t i = 0; i < p.count; ++i)
      p.data[i] = ends_with(p.name, ".var") ? rng.uniform(0.5f, 1.5f) : rng.uniform(-1.f, 1.f);
  });
}

bool params_equal(const Model& a, const Model& b) {
  std::vector<std::pair<const float*, size_t>> rows;
  for_each_param(b, [&](const ParamRef& p) { rows.emplace_back(p.data, p.count); });
  size_t idx = 0;
  bool equal = true;
  for_each_param(a, [&](const ParamRef& p) {
    equal = equal && p.count == rows[idx].second &&
            std::memcmp(p.data, rows[idx].first, p.count * sizeof(float)) == 0;
    ++idx;
  });
  return equal && idx == rows.size();
}
}  // namespace

TEST_CASE("a store round trips through disk bit for bit") {
  Model m = build_model(micro(), 61);
  randomize_all(m, 62);
  const char* path = "weights_roundtrip_test.mmws";
  save_weights(m, path);
  Model fresh = build_model(micro(), 63);
  REQUIRE_FALSE(params_equal(m, fresh));
  load_weights(path, fresh);
  REQUIRE(params_equal(m, fresh));
  std::remove(path);
}

TEST_CASE("the header encodes magic, version, and count") {
  Model m = build_model(micro(), 64);
  const WeightStore store = WeightStore::from_model(m);
  const std::vector<uint8_t> bytes = store.to_bytes();
  REQUIRE(bytes.size() > 12);
  REQUIRE(bytes[0] == 'M');
  REQUIRE(bytes[1] == 'M');
  REQUIRE(bytes[2] == 'W');
  REQUIRE(bytes[3] == 'S');
  const uint32_t version = bytes[4] | bytes[5] << 8 | bytes[6] << 16 |
                           static_cast<uint32_t>(bytes[7]) << 24;
  REQUIRE(version == 1);
  const uint32_t count = bytes[8] | bytes[9] << 8 | bytes[10] << 16 |
                         static_cast<uint32_t>(bytes[11]) << 24;
  REQUIRE(count == store.manifest.size());

  const WeightStore back = WeightStore::from_bytes(bytes);
  REQUIRE(back.manifest.size() == store.manifest.size());
  REQUIRE(back.payload == store.payload);
  for (size_t i = 0; i < back.manifest.size(); ++i) {
    REQUIRE(back.manifest[i].name == store.manifest[i].name);
    REQUIRE(back.manifest[i].dims == store.manifest[i].dims);
    REQUIRE(back.manifest[i].byte_offset == store.manifest[i].byte_offset);
  }
}

TEST_CASE("manifest entries tile the payload contiguously") {
  Model m = build_model(micro(), 65);
  const WeightStore store = WeightStore::from_model(m);
  uint64_t offset = 0;
  for (const WeightEntry& e : store.manifest) {
    REQUIRE(e.byte_offset == offset);
    offset += e.elem_count() * sizeof(float);
  }
  REQUIRE(offset == store.payload.size() * sizeof(float));
}

TEST_CASE("a missing entry is reported by name before anything is written") {
  Model m = build_model(micro(), 66);
  randomize_all(m, 67);
  WeightStore store = WeightStore::from_model(m);
  const std::string dropped = store.manifest[3].name;
  store.manifest.erase(store.manifest.begin() + 3);
  Model target = build_model(micro(), 68);
  const WeightStore before = WeightStore::from_model(target);
  try {
    store.apply_to(target);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    REQUIRE(std::string(e.what()).find(dropped) != std::string::npos);
  }
  // All-or-nothing: the failed load must not have changed any parameter.
  const WeightStore after = WeightStore::from_model(target);
  REQUIRE(after.payload == before.payload);
}

TEST_CASE("an unexpected entry is rejected") {
  Model m = build_model(micro(), 69);
  WeightStore store = WeightStore::from_model(m);
  WeightEntry bogus;
  bogus.name = "stage9.block7.nothing.weight";
  bogus.dims = {4};
  bogus.byte_offset = store.payload.size();
  store.manifest.push_back(bogus);
  store.payload.resize(store.payload.size() + 16);
  Model target = build_model(micro(), 70);
  try {
    store.apply_to(target);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    REQUIRE(std::string(e.what()).find("stage9.block7.nothing.weight") != std::string::npos);
  }
}

TEST_CASE("shape mismatches name the offending tensor") {
  Model m = build_model(micro(), 71);
  WeightStore store = WeightStore::from_model(m);
  store.manifest[0].dims = {1, 2, 3};
  Model target = build_model(micro(), 72);
  try {
    store.apply_to(target);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    REQUIRE(std::string(e.what()).find(store.manifest[0].name) != std::string::npos);
  }
}

TEST_CASE("corrupt containers are rejected at parse time") {
  Model m = build_model(micro(), 73);
  const std::vector<uint8_t> good = WeightStore::from_model(m).to_bytes();

  std::vector<uint8_t> truncated = good;
  truncated.resize(truncated.size() - 5);
  REQUIRE_THROWS_AS(WeightStore::from_bytes(truncated), DataError);

  std::vector<uint8_t> bad_magic = good;
  bad_magic[0] = 'X';
  REQUIRE_THROWS_AS(WeightStore::from_bytes(bad_magic), DataError);

  std::vector<uint8_t> bad_version = good;
  bad_version[4] = 9;
  REQUIRE_THROWS_AS(WeightStore::from_bytes(bad_version), DataError);

  std::vector<uint8_t> tiny(bad_magic.begin(), bad_magic.begin() + 6);
  REQUIRE_THROWS_AS(WeightStore::from_bytes(tiny), DataError);
}

TEST_CASE("loading from a missing file is a data error") {
  Model m = build_model(micro(), 74);
  REQUIRE_THROWS_AS(load_weights("no_such_dir/nothing.mmws", m), DataError);
}

TEST_CASE("fused stores load into fused-layout models") {
  Model m = build_model(micro(), 75);
  randomize_all(m, 76);
  Model fused = fuse_model(m).first;
  const char* path = "weights_fused_test.mmws";
  save_weights(fused, path);

  Model target = fuse_model(build_model(micro(), 78)).first;
  load_weights(path, target);
  REQUIRE(params_equal(fused, target));

  // The fused layout must not load into an unfused model.
  Model plain = build_model(micro(), 79);
  REQUIRE_THROWS_AS(load_weights(path, plain), DataError);
  std::remove(path);
}
