#pragma once

#include <chrono>
#include <map>

#include "mobilemamba/model.hpp"

namespace mm {

// ---------------------------------------------------------------------------
// Static cost accounting. Conventions (also stamped into the report header):
//   * 1 MAC = 1 FLOP; a 2x figure is printed alongside for the multiply+add
//     convention.
//   * The scan recurrence is budgeted at kScanStepMacs (9) per step per inner
//     channel per direction; projections feeding it are counted as linears.
//   * Wavelet analysis/synthesis cost 4 MACs per produced element.
//   * Normalizations, activations, residual adds, and gates count one op per
//     element and are totalled separately from MACs.
//   * Parameters count BN as gamma+beta (2C); running stats are buffers.
// ---------------------------------------------------------------------------

struct CostReport {
  std::string model_name;
  int resolution = 0;
  std::vector<GraphLayer> rows;
  uint64_t total_macs = 0;
  uint64_t total_params = 0;
  uint64_t total_elementwise = 0;
  std::array<uint64_t, 5> macs_by_stage{}, params_by_stage{};  // stem, 1-3, head
  std::map<std::string, uint64_t> macs_by_branch, params_by_branch;

  static const char* conventions() {
    return "counts: 1 MAC = 1 FLOP; scan budget 9 MACs/step/channel/direction; "
           "wavelet 4 MACs/element; elementwise ops tallied separately; BN params = gamma+beta";
  }

  std::string to_text(bool per_layer = false) const {
    std::string out = strfmt("%s @ %d\n%s\n", model_name.c_str(), resolution, conventions());
    if (per_layer) {
      out += strfmt("%-44s %-8s %6s %14s %12s %12s\n", "layer", "kind", "stage", "macs", "params",
                    "eltwise");
      for (const GraphLayer& r : rows)
        out += strfmt("%-44s %-8s %6d %14llu %12llu %12llu\n", r.name.c_str(),
                      layer_kind_name(r.kind), r.stage, (unsigned long long)r.macs,
                      (unsigned long long)r.params, (unsigned long long)r.elementwise);
    }
    out += "by stage (macs / params):\n";
    for (int stage = 0; stage < 5; ++stage) {
      const char* label = stage == 0 ? "stem" : (stage == 4 ? "head" : nullptr);
      out += label ? strfmt("  %-6s", label) : strfmt("  stage%d", stage);
      out += strfmt(" %14llu %12llu\n", (unsigned long long)macs_by_stage[stage],
                    (unsigned long long)params_by_stage[stage]);
    }
    out += "by branch (macs / params):\n";
    for (const auto& [branch, macs] : macs_by_branch)
      out += strfmt("  %-12s %14llu %12llu\n", branch.c_str(), (unsigned long long)macs,
                    (unsigned long long)params_by_branch.at(branch));
    out += strfmt("total: %.1fM MACs (%.1fM at 2 FLOPs/MAC), %.2fM params, %.1fM elementwise\n",
                  total_macs / 1e6, 2 * total_macs / 1e6, total_params / 1e6,
                  total_elementwise / 1e6);
    return out;
  }

  std::string to_csv() const {
    std::string out = "layer,kind,stage,branch,in_c,in_h,in_w,out_c,out_h,out_w,macs,params,"
                      "elementwise\n";
    for (const GraphLayer& r : rows)
      out += strfmt("%s,%s,%d,%s,%d,%d,%d,%d,%d,%d,%llu,%llu,%llu\n", r.name.c_str(),
                    layer_kind_name(r.kind), r.stage, r.branch.c_str(), r.in_shape[0],
                    r.in_shape[1], r.in_shape[2], r.out_shape[0], r.out_shape[1], r.out_shape[2],
                    (unsigned long long)r.macs, (unsigned long long)r.params,
                    (unsigned long long)r.elementwise);
    return out;
  }
};

inline CostReport count_costs(const BlockGraph& g) {
  CostReport rep;
  rep.model_name = g.model_name;
  rep.resolution = g.resolution;
  rep.rows = g.layers;
  for (const GraphLayer& r : rep.rows) {
    rep.total_macs += r.macs;
    rep.total_params += r.params;
    rep.total_elementwise += r.elementwise;
    rep.macs_by_stage[r.stage] += r.macs;
    rep.params_by_stage[r.stage] += r.params;
    rep.macs_by_branch[r.branch] += r.macs;
    rep.params_by_branch[r.branch] += r.params;
  }
  return rep;
}

inline CostReport count_costs(const Model& m) { return count_costs(build_graph(m)); }

// ---------------------------------------------------------------------------
// Wall-clock throughput harness.
// ---------------------------------------------------------------------------

struct BenchResult {
  int batch_size = 0;
  int warmup_iters = 0;
  int measured_iters = 0;
  double images_per_second = 0;
  double latency_mean_ms = 0;
  double latency_p50_ms = 0;
  double latency_p95_ms = 0;

  std::string to_text() const {
    return strfmt("batch %d, %d warmup + %d measured iters: %.2f img/s; latency ms "
                  "mean %.2f p50 %.2f p95 %.2f",
                  batch_size, warmup_iters, measured_iters, images_per_second, latency_mean_ms,
                  latency_p50_ms, latency_p95_ms);
  }
};

inline BenchResult bench(const Model& m, int batch, int warmup, int iters, int threads = 0,
                         uint64_t seed = 99) {
  if (iters < 10) throw ConfigError(strfmt("need >= 10 measured iterations, got %d", iters));
  if (batch < 1) throw ConfigError(strfmt("batch must be >= 1, got %d", batch));
  if (warmup < 0) throw ConfigError(strfmt("warmup must be >= 0, got %d", warmup));
  ThreadPool& pool = ThreadPool::instance();
  const int prev_threads = pool.threads();
  if (threads > 0) pool.set_threads(threads);
  Rng rng(seed);
  Tensor x(batch, 3, m.cfg.resolution, m.cfg.resolution);
  for (float& v : x.data) v = rng.uniform(-1.f, 1.f);
  using clock = std::chrono::steady_clock;
  for (int i = 0; i < warmup; ++i) forward(m, x);
  std::vector<double> lat_ms(iters);
  const auto t_all0 = clock::now();
  for (int i = 0; i < iters; ++i) {
    const auto t0 = clock::now();
    forward(m, x);
    lat_ms[i] = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  }
  const double total_s = std::chrono::duration<double>(clock::now() - t_all0).count();
  if (threads > 0) pool.set_threads(prev_threads);
  BenchResult r;
  r.batch_size = batch;
  r.warmup_iters = warmup;
  r.measured_iters = iters;
  r.images_per_second = batch * static_cast<double>(iters) / total_s;
  double sum = 0;
  for (double v : lat_ms) sum += v;
  r.latency_mean_ms = sum / iters;
  std::vector<double> sorted = lat_ms;
  std::sort(sorted.begin(), sorted.end());
  auto rank = [&](double q) {
    const size_t idx = static_cast<size_t>(std::ceil(q * iters));
    return sorted[std::min(sorted.size() - 1, idx == 0 ? 0 : idx - 1)];
  };
  r.latency_p50_ms = rank(0.50);
  r.latency_p95_ms = rank(0.95);
  return r;
}

}  // namespace mm
