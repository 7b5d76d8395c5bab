#include <algorithm>
#include <catch2/catch_amalgamated.hpp>

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

const GraphLayer& find_row(const BlockGraph& g, const std::string& name) {
  for (const GraphLayer& row : g.layers)
    if (row.name == name) return row;
  FAIL("no row named " + name);
  static GraphLayer dummy;
  return dummy;
}
}  // namespace

TEST_CASE("the graph starts at the stem and ends at the classifier") {
  const BlockGraph g = build_graph(build_model(preset("T2"), 1));
  REQUIRE_FALSE(g.layers.empty());
  REQUIRE(g.layers.front().name == "patch_embed.conv1");
  REQUIRE(g.layers.front().stage == 0);
  REQUIRE(g.layers.back().name == "head.fc");
  REQUIRE(g.layers.back().stage == 4);
  REQUIRE(g.model_name == "T2");
  REQUIRE(g.resolution == 192);
}

TEST_CASE("graph parameter totals match the registry for every preset") {
  for (const char* name : {"T2", "T4", "S6", "B1", "B2", "B4"}) {
    const Model m = build_model(preset(name), 2);
    const CostReport rep = count_costs(m);
    INFO(name);
    REQUIRE(rep.total_params == param_count(m));
  }
}

TEST_CASE("a pointwise projection row carries the hand-counted figures") {
  const BlockGraph g = build_graph(build_model(preset("T2"), 3));
  const GraphLayer& proj = find_row(g, "stage1.block0.mrffi.proj");
  REQUIRE(proj.kind == LayerKind::Conv);
  REQUIRE(proj.params == 144ull * 144);
  REQUIRE(proj.macs == 144ull * 144 * 12 * 12);
  const GraphLayer& bn = find_row(g, "stage1.block0.mrffi.proj.bn");
  REQUIRE(bn.kind == LayerKind::BatchNorm);
  REQUIRE(bn.params == 2ull * 144);
  REQUIRE(bn.macs == 0);
}

TEST_CASE("scan rows follow the nine-mac step budget") {
  const BlockGraph g = build_graph(build_model(preset("T2"), 4));
  // Stage 1 of the smallest variant: 144 channels, global slice 115,
  // inner width 230, 12x12 tokens.
  const GraphLayer& fwd = find_row(g, "stage1.block0.mrffi.mamba.fwd.scan");
  REQUIRE(fwd.kind == LayerKind::Scan);
  REQUIRE(fwd.macs == 9ull * 230 * 144);
  const GraphLayer& bwd = find_row(g, "stage1.block0.mrffi.mamba.bwd.scan");
  REQUIRE(bwd.macs == fwd.macs);
  // a_log + d_skip for state size 1.
  REQUIRE(fwd.params == 230ull + 230);
}

TEST_CASE("wavelet rows count four macs per emitted element") {
  const BlockGraph g = build_graph(build_model(preset("T2"), 5));
  const GraphLayer& dec = find_row(g, "stage1.block0.mrffi.wt.dec");
  REQUIRE(dec.kind == LayerKind::Wavelet);
  REQUIRE(dec.macs == 4ull * (4 * 115) * 6 * 6);
  REQUIRE(dec.params == 0);
  const GraphLayer& rec = find_row(g, "stage1.block0.mrffi.wt.rec");
  REQUIRE(rec.macs == 4ull * 115 * 12 * 12);
}

TEST_CASE("layer counting tracks weight-bearing rows only") {
  const Model m = build_model(micro(), 6);
  const BlockGraph g = build_graph(m);
  int weight_rows = 0;
  for (const GraphLayer& row : g.layers)
    if (row.kind == LayerKind::Conv || row.kind == LayerKind::BatchNorm ||
        row.kind == LayerKind::Linear)
      ++weight_rows;
  REQUIRE(g.compute_layer_count() == weight_rows);
}

TEST_CASE("cost reports include totals and stage breakdowns") {
  const CostReport rep = count_costs(build_model(preset("T2"), 7));
  uint64_t stage_macs = 0, stage_params = 0;
  for (int s = 0; s < 5; ++s) {
    stage_macs += rep.macs_by_stage[s];
    stage_params += rep.params_by_stage[s];
  }
  REQUIRE(stage_macs == rep.total_macs);
  REQUIRE(stage_params == rep.total_params);

  const std::string text = rep.to_text(false);
  REQUIRE_THAT(text, Catch::Matchers::ContainsSubstring("T2"));
  REQUIRE_THAT(text, Catch::Matchers::ContainsSubstring("total"));
  const std::string csv = rep.to_csv();
  REQUIRE_THAT(csv, Catch::Matchers::ContainsSubstring("layer,kind,"));
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') >= 2);
}

TEST_CASE("bench validates its arguments") {
  const Model m = build_model(micro(), 8);
  REQUIRE_THROWS_AS(bench(m, 0, 0, 10), ConfigError);
  REQUIRE_THROWS_AS(bench(m, 1, -1, 10), ConfigError);
  REQUIRE_THROWS_AS(bench(m, 1, 0, 9), ConfigError);
}

TEST_CASE("bench measures a micro model") {
  const Model m = build_model(micro(), 9);
  const BenchResult r = bench(m, 2, 1, 10, 1, 10);
  REQUIRE(r.measured_iters == 10);
  REQUIRE(r.batch_size == 2);
  REQUIRE(r.images_per_second > 0.f);
  REQUIRE(r.latency_p50_ms <= r.latency_p95_ms);
  REQUIRE(r.latency_mean_ms > 0.f);
  REQUIRE_THAT(r.to_text(), Catch::Matchers::ContainsSubstring("img/s"));
}
