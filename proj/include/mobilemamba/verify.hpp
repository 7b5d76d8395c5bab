#pragma once

#include <chrono>

#include "mobilemamba/fusion.hpp"
#include "mobilemamba/metrics.hpp"
#include "mobilemamba/reference.hpp"

namespace mm {

// ---------------------------------------------------------------------------
// Self-contained invariant suite: every numerical contract the library makes
// is exercised here against oracles, closed forms, or published cost figures.
// Used by the `verify` CLI command and by the acceptance tests.
// ---------------------------------------------------------------------------

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifyOptions {
  int scan_cases = 1000;
  int selective_cases = 200;
  int wavelet_cases = 500;
  int mrffi_cases = 100;
  int fusion_probes = 2;
  std::string fusion_preset = "S6";
  uint64_t seed = 12345;
  bool include_variants = true;  // builds all presets; the slow part
};

/// Published per-variant cost figures (FLOPs in M with 1 MAC = 1 FLOP,
/// params in M) this implementation is expected to land near.
struct ReferenceCost {
  const char* variant;
  double flops_m;
  double params_m;
};
inline const std::vector<ReferenceCost>& reference_costs() {
  static const std::vector<ReferenceCost> table = {
      {"T2", 255, 8.8}, {"T4", 413, 14.2}, {"S6", 652, 15.0},
      {"B1", 1080, 17.1}, {"B2", 2427, 17.1}, {"B4", 4313, 17.1},
  };
  return table;
}
constexpr double kFlopsTolerance = 0.15;
constexpr double kParamsTolerance = 0.10;

// --------------------------- randomization helpers -------------------------

namespace testing {

inline void fill_uniform(Tensor& t, Rng& rng, float lo, float hi) {
  for (float& v : t.data) v = rng.uniform(lo, hi);
}

inline void fill_uniform(std::vector<float>& v, Rng& rng, float lo, float hi) {
  for (float& x : v) x = rng.uniform(lo, hi);
}

inline void randomize_scan_head(ScanHead& h, Rng& rng) {
  fill_uniform(h.a_log, rng, -2.f, 0.5f);
  fill_uniform(h.dt_proj.weight, rng, -0.5f, 0.5f);
  fill_uniform(h.dt_proj.bias, rng, -1.f, 1.f);
  fill_uniform(h.b_proj.weight, rng, -0.5f, 0.5f);
  fill_uniform(h.c_proj.weight, rng, -0.5f, 0.5f);
  fill_uniform(h.d_skip, rng, -1.f, 1.f);
}

inline SelectiveSsmParams random_mamba(int c_g, int d_state, bool euler_b, Rng& rng) {
  MrffiConfig cfg;
  cfg.xi = 1.f;
  cfg.d_state = d_state;
  cfg.euler_b = euler_b;
  SelectiveSsmParams p = detail::make_mamba(c_g, cfg);
  fill_uniform(p.in_proj.weight, rng, -0.5f, 0.5f);
  fill_uniform(p.in_proj.bias, rng, -0.2f, 0.2f);
  fill_uniform(p.conv1d_weight, rng, -0.5f, 0.5f);
  fill_uniform(p.conv1d_bias, rng, -0.2f, 0.2f);
  fill_uniform(p.out_proj.weight, rng, -0.5f, 0.5f);
  fill_uniform(p.out_proj.bias, rng, -0.2f, 0.2f);
  randomize_scan_head(p.fwd, rng);
  randomize_scan_head(p.bwd, rng);
  return p;
}

inline void randomize_bn(BatchNormParams& bn, Rng& rng) {
  fill_uniform(bn.gamma, rng, 0.6f, 1.4f);
  fill_uniform(bn.beta, rng, -0.15f, 0.15f);
  fill_uniform(bn.mean, rng, -0.15f, 0.15f);
  fill_uniform(bn.var, rng, 0.5f, 1.8f);
}

inline void randomize_mrffi(Mrffi& m, Rng& rng) {
  if (m.part.c_g > 0) {
    const SelectiveSsmParams proto = m.mamba;
    m.mamba = random_mamba(proto.c_g, proto.d_state, proto.euler_b, rng);
    m.mamba.expand = proto.expand;
    m.mamba.use_d_skip = proto.use_d_skip;
    if (m.cfg.wt_enabled) {
      fill_uniform(m.wt_conv.weight, rng, -0.4f, 0.4f);
      randomize_bn(*m.wt_conv.bn, rng);
    }
  }
  for (ConvBn& split : m.mk.splits) {
    fill_uniform(split.weight, rng, -0.4f, 0.4f);
    randomize_bn(*split.bn, rng);
  }
}

/// Give every normalization non-trivial statistics so folding moves weights.
inline void perturb_model_bn(Model& m, uint64_t seed) {
  Rng rng(seed);
  for_each_param(m, [&](const ParamRef& p) {
    if (ends_with(p.name, ".gamma"))
      for (size_t i = 0; i < p.count; ++i) p.data[i] *= rng.uniform(0.7f, 1.3f);
    else if (ends_with(p.name, ".beta") || ends_with(p.name, ".mean"))
      for (size_t i = 0; i < p.count; ++i) p.data[i] += rng.uniform(-0.1f, 0.1f);
    else if (ends_with(p.name, ".var"))
      for (size_t i = 0; i < p.count; ++i) p.data[i] *= rng.uniform(0.5f, 1.8f);
  });
}

}  // namespace testing

// ------------------------------- checks ------------------------------------

inline CheckResult check_haar_orthonormality() {
  HaarFilterBank bank;
  float worst = 0.f;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      float dot = 0.f;
      for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) dot += bank.f[i][y][x] * bank.f[j][y][x];
      worst = std::max(worst, std::fabs(dot - (i == j ? 1.f : 0.f)));
    }
  return {"haar filter orthonormality", worst == 0.f,
          strfmt("max |gram - identity| = %g (exact zero required)", worst)};
}

inline CheckResult check_wavelet_reconstruction(int cases, uint64_t seed) {
  Rng rng(seed);
  float worst_abs = 0.f, worst_energy = 0.f;
  for (int cs = 0; cs < cases; ++cs) {
    int h, w;
    switch (cs % 5) {
      case 0: h = w = 3; break;  // stage-3 map of the smallest resolution
      case 1: h = w = 7; break;
      default:
        h = 1 + static_cast<int>(rng.next_u32() % 17);
        w = 1 + static_cast<int>(rng.next_u32() % 17);
    }
    const int c = 1 + static_cast<int>(rng.next_u32() % 4);
    Tensor x(1, c, h, w);
    for (float& v : x.data) v = rng.normal();
    const Tensor coeffs = wt2d(x);
    const Tensor back = iwt2d(coeffs, {}, h, w);
    for (size_t i = 0; i < x.size(); ++i)
      worst_abs = std::max(worst_abs, std::fabs(back.data[i] - x.data[i]));
    double ex = 0, ey = 0;
    for (float v : x.data) ex += static_cast<double>(v) * v;
    for (float v : coeffs.data) ey += static_cast<double>(v) * v;
    if (ex > 0) worst_energy = std::max(worst_energy, static_cast<float>(std::fabs(ey - ex) / ex));
  }
  const bool pass = worst_abs <= 1e-5f && worst_energy <= 1e-4f;
  return {"wavelet perfect reconstruction", pass,
          strfmt("%d cases: max abs err %.2e (<=1e-5), energy drift %.2e (<=1e-4)", cases,
                 worst_abs, worst_energy)};
}

inline CheckResult check_scan_kernel_equivalence(int cases, uint64_t seed) {
  Rng rng(seed);
  const auto t0 = std::chrono::steady_clock::now();
  float worst = 0.f;
  for (int cs = 0; cs < cases; ++cs) {
    const int L = 1 + static_cast<int>(rng.next_u32() % 128);
    LtiSsm p = lti_from_a_log(rng.uniform(-4.f, 1.f), rng.uniform(-2.f, 2.f),
                              rng.uniform(-2.f, 2.f),
                              std::exp(rng.uniform(std::log(1e-3f), std::log(2.f))));
    std::vector<float> x(L);
    for (float& v : x) v = rng.uniform(-1.f, 1.f);
    auto [a_bar, b_bar] = discretize_zoh(p);
    const std::vector<float> a_seq(L, a_bar), b_seq(L, b_bar), c_seq(L, p.c_out);
    const std::vector<float> y_rec = scan_recurrent(a_seq, b_seq, c_seq, x);
    const std::vector<float> y_conv = scan_convolutional(p, x);
    float ref = 0.f, diff = 0.f;
    for (int t = 0; t < L; ++t) {
      ref = std::max(ref, std::fabs(y_rec[t]));
      diff = std::max(diff, std::fabs(y_rec[t] - y_conv[t]));
    }
    worst = std::max(worst, diff / (ref + 1e-12f));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool pass = worst <= 1e-4f && secs < 10.0;
  return {"scan/kernel equivalence", pass,
          strfmt("%d LTI cases, L<=128: max rel err %.2e (<=1e-4) in %.2fs (<10s)", cases, worst,
                 secs)};
}

inline CheckResult check_discretization_continuity() {
  float worst = 0.f;
  for (float b : {1.f, -2.f, 0.5f}) {
    // Land exactly on |delta*a| = tau and compare the two branch formulas.
    const float a = -1.f, delta = kTaylorTau;
    const float z = delta * a;
    const float exact = std::expm1(z) / a * b;
    const float taylor = delta * b * (1.f + 0.5f * z);
    worst = std::max(worst, std::fabs(exact - taylor));
  }
  return {"discretization branch continuity", worst <= 1e-6f,
          strfmt("branch disagreement at the switch point %.2e (<=1e-6)", worst)};
}

inline CheckResult check_selective_scan_oracle(int cases, uint64_t seed) {
  Rng rng(seed);
  float worst = 0.f;
  for (int cs = 0; cs < cases; ++cs) {
    const int c_g = 1 + static_cast<int>(rng.next_u32() % 8);  // inner = 2*c_g <= 16
    const int d_state = (cs % 4 == 3) ? 1 + static_cast<int>(rng.next_u32() % 4) : 1;
    const int L = 1 + static_cast<int>(rng.next_u32() % 64);
    const bool euler = cs % 5 == 4;
    SelectiveSsmParams p = testing::random_mamba(c_g, d_state, euler, rng);
    Tensor tokens(L, p.inner(), 1, 1);
    for (float& v : tokens.data) v = rng.normal();
    const ScanDirection dir = cs % 2 ? ScanDirection::Backward : ScanDirection::Forward;
    const Tensor got = selective_scan(tokens, p, dir);
    const Tensor want = naive_selective_scan(tokens, p, dir);
    for (size_t i = 0; i < got.size(); ++i)
      worst = std::max(worst, std::fabs(got.data[i] - want.data[i]));
  }
  return {"selective scan vs naive oracle", worst <= 1e-5f,
          strfmt("%d cases, L<=64, inner<=16: max abs err %.2e (<=1e-5)", cases, worst)};
}

inline CheckResult check_split_concat(uint64_t seed) {
  Rng rng(seed);
  bool ok = true;
  for (int cs = 0; cs < 50 && ok; ++cs) {
    const int c = 2 + static_cast<int>(rng.next_u32() % 30);
    Tensor x(1 + static_cast<int>(rng.next_u32() % 3), c, 1 + static_cast<int>(rng.next_u32() % 6),
             1 + static_cast<int>(rng.next_u32() % 6));
    for (float& v : x.data) v = rng.normal();
    const int a = static_cast<int>(rng.next_u32() % (c + 1));
    const int b = static_cast<int>(rng.next_u32() % (c - a + 1));
    const Tensor back = concat_channels(split_channels(x, {a, b, c - a - b}));
    ok = back.same_shape(x) && std::memcmp(back.data.data(), x.data.data(),
                                           x.size() * sizeof(float)) == 0;
  }
  return {"split/concat round trip", ok, ok ? "bit-exact over 50 random partitions"
                                            : "round trip altered data"};
}

inline CheckResult check_partition_conservation(uint64_t seed) {
  MrffiConfig pinned;
  pinned.xi = 0.6f;
  pinned.mu = 0.3f;
  const Partition ex = partition(448, pinned);
  if (ex.c_g != 268 || ex.c_l != 134 || ex.c_id != 46)
    return {"channel partition", false,
            strfmt("448 @ (0.6, 0.3) gave (%d, %d, %d), expected (268, 134, 46)", ex.c_g, ex.c_l,
                   ex.c_id)};
  Rng rng(seed);
  for (int cs = 0; cs < 200; ++cs) {
    MrffiConfig cfg;
    cfg.xi = rng.uniform();
    cfg.mu = rng.uniform() * (1.f - cfg.xi);
    cfg.n_splits = 1 + static_cast<int>(rng.next_u32() % 4);
    const int c = 1 + static_cast<int>(rng.next_u32() % 512);
    const Partition p = partition(c, cfg);
    if (p.c_g + p.c_l + p.c_id != c || p.c_l % cfg.n_splits != 0 || p.c_g < 0 || p.c_l < 0 ||
        p.c_id < 0)
      return {"channel partition", false,
              strfmt("c=%d xi=%g mu=%g n=%d gave (%d, %d, %d)", c, cfg.xi, cfg.mu, cfg.n_splits,
                     p.c_g, p.c_l, p.c_id)};
  }
  return {"channel partition", true,
          "pinned 448 @ (0.6, 0.3) -> (268, 134, 46); conservation on 200 random configs"};
}

inline CheckResult check_mrffi_identity(int cases, uint64_t seed) {
  Rng rng(seed);
  // Degenerate config: no global, no local -> module must be a bit-exact copy.
  {
    MrffiConfig cfg;
    Mrffi m = detail::make_mrffi(24, cfg);
    Tensor x(2, 24, 5, 7);
    for (float& v : x.data) v = rng.normal();
    const Tensor y = mrffi_forward(x, m);
    if (!y.same_shape(x) ||
        std::memcmp(y.data.data(), x.data.data(), x.size() * sizeof(float)) != 0)
      return {"mrffi identity slices", false, "xi=mu=0 did not reduce to a bit-exact identity"};
  }
  for (int cs = 0; cs < cases; ++cs) {
    MrffiConfig cfg;
    cfg.xi = rng.uniform() * 0.7f;
    cfg.mu = rng.uniform() * (1.f - cfg.xi);
    cfg.n_splits = 1 + static_cast<int>(rng.next_u32() % 3);
    cfg.wt_enabled = cs % 3 != 2;
    const int c = 2 + static_cast<int>(rng.next_u32() % 47);
    Mrffi m = detail::make_mrffi(c, cfg);
    if (m.part.c_id == 0) continue;
    testing::randomize_mrffi(m, rng);
    Tensor x(1, c, 2 + static_cast<int>(rng.next_u32() % 9),
             2 + static_cast<int>(rng.next_u32() % 9));
    for (float& v : x.data) v = rng.normal();
    const Tensor y = mrffi_forward(x, m);
    const int off = m.part.c_g + m.part.c_l;
    for (int img = 0; img < x.n; ++img)
      if (std::memcmp(y.chan(img, off), x.chan(img, off),
                      static_cast<size_t>(m.part.c_id) * x.plane() * sizeof(float)) != 0)
        return {"mrffi identity slices", false,
                strfmt("identity channels modified for c=%d xi=%g mu=%g", c, cfg.xi, cfg.mu)};
  }
  return {"mrffi identity slices", true,
          strfmt("xi=mu=0 bit-exact; identity slice bit-exact over %d random configs", cases)};
}

inline CheckResult check_variant_shapes(uint64_t seed) {
  std::string detail;
  for (const ReferenceCost& ref : reference_costs()) {
    const ModelConfig cfg = preset(ref.variant);
    const Model m = build_model(cfg, seed);
    Rng rng(seed + 1);
    Tensor x(1, 3, cfg.resolution, cfg.resolution);
    for (float& v : x.data) v = rng.uniform(-1.f, 1.f);
    const Tensor logits = forward(m, x);
    if (logits.n != 1 || logits.c != cfg.num_classes)
      return {"variant build/forward", false,
              strfmt("%s logits shape %s", ref.variant, logits.shape_str().c_str())};
    for (float v : logits.data)
      if (!std::isfinite(v))
        return {"variant build/forward", false, strfmt("%s produced non-finite logits",
                                                       ref.variant)};
    // Stage spatial maps from the graph; 192-input variants must hit 12/6/3.
    const BlockGraph g = build_graph(m);
    const std::array<int, 3> want = cfg.stage_resolutions();
    for (const GraphLayer& row : g.layers)
      if (row.branch == "lp" && row.kind == LayerKind::Conv &&
          row.out_shape[1] != want[row.stage - 1])
        return {"variant build/forward", false,
                strfmt("%s %s runs at %d, stage %d expects %d", ref.variant, row.name.c_str(),
                       row.out_shape[1], row.stage, want[row.stage - 1])};
    detail += strfmt("%s%s@%d ok (maps %d/%d/%d)", detail.empty() ? "" : "; ", ref.variant,
                     cfg.resolution, want[0], want[1], want[2]);
  }
  const uint64_t pb1 = param_count(build_model(preset("B1"), seed));
  const uint64_t pb2 = param_count(build_model(preset("B2"), seed));
  const uint64_t pb4 = param_count(build_model(preset("B4"), seed));
  if (pb1 != pb2 || pb1 != pb4)
    return {"variant build/forward", false,
            strfmt("resolution scaling changed params: %llu / %llu / %llu",
                   (unsigned long long)pb1, (unsigned long long)pb2, (unsigned long long)pb4)};
  return {"variant build/forward", true, detail + "; B1/B2/B4 params identical"};
}

inline CheckResult check_cost_tolerances(uint64_t seed) {
  std::string detail;
  bool pass = true;
  for (const ReferenceCost& ref : reference_costs()) {
    const CostReport rep = count_costs(build_model(preset(ref.variant), seed));
    const double fdev = rep.total_macs / (ref.flops_m * 1e6) - 1.0;
    const double pdev = rep.total_params / (ref.params_m * 1e6) - 1.0;
    const bool ok = std::fabs(fdev) <= kFlopsTolerance && std::fabs(pdev) <= kParamsTolerance;
    pass = pass && ok;
    detail += strfmt("%s%s flops %+.1f%% params %+.1f%%%s", detail.empty() ? "" : "; ",
                     ref.variant, 100 * fdev, 100 * pdev, ok ? "" : " OUT OF RANGE");
  }
  return {"cost reproduction", pass, detail};
}

inline CheckResult check_fusion_equivalence(const std::string& variant, int probes,
                                            uint64_t seed) {
  Model m = build_model(preset(variant), seed);
  testing::perturb_model_bn(m, seed + 1);
  try {
    auto [fused, rep] = fuse_model(m, probes, seed + 2);
    if (rep.layers_after >= rep.layers_before)
      return {"fusion equivalence", false,
              strfmt("%s layer count %d -> %d did not shrink", variant.c_str(),
                     rep.layers_before, rep.layers_after)};
    auto [fused2, rep2] = fuse_model(fused);
    if (!rep2.fused_pairs.empty() || rep2.layers_after != rep.layers_after)
      return {"fusion equivalence", false, "second pass was not a no-op"};
    return {"fusion equivalence", true,
            strfmt("%s: %s; idempotent", variant.c_str(), rep.summary().c_str())};
  } catch (const Error& e) {
    return {"fusion equivalence", false, e.what()};
  }
}

inline std::vector<CheckResult> run_verification(const VerifyOptions& opt = {}) {
  std::vector<CheckResult> results;
  results.push_back(check_haar_orthonormality());
  results.push_back(check_wavelet_reconstruction(opt.wavelet_cases, opt.seed));
  results.push_back(check_scan_kernel_equivalence(opt.scan_cases, opt.seed + 1));
  results.push_back(check_discretization_continuity());
  results.push_back(check_selective_scan_oracle(opt.selective_cases, opt.seed + 2));
  results.push_back(check_split_concat(opt.seed + 3));
  results.push_back(check_partition_conservation(opt.seed + 4));
  results.push_back(check_mrffi_identity(opt.mrffi_cases, opt.seed + 5));
  if (opt.include_variants) {
    results.push_back(check_variant_shapes(opt.seed + 6));
    results.push_back(check_cost_tolerances(opt.seed + 7));
    results.push_back(check_fusion_equivalence(opt.fusion_preset, opt.fusion_probes,
                                               opt.seed + 8));
  }
  return results;
}

}  // namespace mm
