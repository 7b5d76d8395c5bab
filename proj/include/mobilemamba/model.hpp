#pragma once

#include <array>
#include <functional>
#include <map>
#include <string>

#include "mobilemamba/mrffi.hpp"

namespace mm {

// ---------------------------------------------------------------------------
// Full backbone: 16x patch embed, three stages of blocks joined by
// downsampling, average-pool head. Each block wraps the channel-partitioned
// mixer between local depthwise convs and feed-forward layers, all residual.
// ---------------------------------------------------------------------------

struct ModelConfig {
  std::string name = "custom";
  int resolution = 224;
  std::array<int, 3> channels{};
  std::array<int, 3> depths{};
  std::array<float, 3> xi{};
  std::array<float, 3> mu{};
  std::array<int, 3> local_kernels{7, 5, 3};
  float ffn_ratio = 2.f;
  int num_classes = 1000;
  float drop_path = 0.f;  // training-time residual drop rate; inert here
  int n_splits = 1;
  int d_state = 1;
  int expand = 2;
  bool wt_enabled = true;
  bool euler_b = false;
  bool use_d_skip = true;
  // Mirrors the local conv + FFN pair on both sides of the mixer. Off gives
  // the lighter conv -> mixer -> FFN layout.
  bool symmetric_lp = true;

  void validate() const {
    if (resolution < 16 || resolution % 16 != 0)
      throw ConfigError(strfmt("resolution %d is not a positive multiple of 16", resolution));
    for (int s = 0; s < 3; ++s) {
      if (channels[s] < 1) throw ConfigError(strfmt("stage %d channels %d", s + 1, channels[s]));
      if (depths[s] < 1) throw ConfigError(strfmt("stage %d depth %d", s + 1, depths[s]));
      if (local_kernels[s] < 1 || local_kernels[s] % 2 == 0)
        throw ConfigError(strfmt("stage %d local kernel %d must be odd", s + 1, local_kernels[s]));
      MrffiConfig m = mrffi_config(s);
      m.validate();
    }
    if (ffn_ratio <= 0.f) throw ConfigError(strfmt("ffn ratio %g", ffn_ratio));
    if (num_classes < 1) throw ConfigError(strfmt("num classes %d", num_classes));
    if (drop_path < 0.f || drop_path >= 1.f) throw ConfigError(strfmt("drop path %g", drop_path));
  }

  MrffiConfig mrffi_config(int stage) const {
    MrffiConfig m;
    m.xi = xi[stage];
    m.mu = mu[stage];
    m.n_splits = n_splits;
    m.wt_enabled = wt_enabled;
    m.d_state = d_state;
    m.expand = expand;
    m.euler_b = euler_b;
    m.use_d_skip = use_d_skip;
    return m;
  }

  /// Feature-map side length per stage: a 16x patch embed, then two 3x3
  /// stride-2 pad-1 downsamples (which round up on odd inputs, e.g. 7 -> 4).
  std::array<int, 3> stage_resolutions() const {
    const auto down = [](int h) { return (h - 1) / 2 + 1; };
    const int s1 = resolution / 16;
    return {s1, down(s1), down(down(s1))};
  }
};

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"T2", "T4", "S6", "B1", "B2", "B4"};
  return names;
}

inline ModelConfig preset(const std::string& name) {
  ModelConfig cfg;
  cfg.name = name;
  cfg.xi = {0.8f, 0.7f, 0.6f};
  cfg.mu = {0.2f, 0.2f, 0.3f};
  if (name == "T2") {
    cfg.resolution = 192;
    cfg.channels = {144, 272, 368};
    cfg.depths = {1, 2, 2};
  } else if (name == "T4") {
    cfg.resolution = 192;
    cfg.channels = {176, 368, 448};
    cfg.depths = {1, 2, 2};
  } else if (name == "S6") {
    cfg.resolution = 224;
    cfg.channels = {192, 384, 448};
    cfg.depths = {1, 2, 2};
  } else if (name == "B1" || name == "B2" || name == "B4") {
    cfg.resolution = name == "B1" ? 256 : (name == "B2" ? 384 : 512);
    cfg.channels = {200, 376, 448};
    cfg.depths = {2, 3, 2};
    cfg.drop_path = 0.03f;
  } else {
    std::string valid;
    for (const auto& v : preset_names()) valid += (valid.empty() ? "" : ", ") + v;
    throw ConfigError(strfmt("unknown variant '%s' (valid: %s)", name.c_str(), valid.c_str()));
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Modules.
// ---------------------------------------------------------------------------

struct Ffn {
  ConvBn pw1, pw2;  // expand then contract, GELU between
};

struct SeBlock {
  LinearLayer fc1, fc2;  // squeeze to the stage width, GELU, expand, sigmoid
};

struct Downsample {
  ConvBn pw_in;   // C -> 4C at full resolution
  ConvBn dw;      // depthwise 3x3 stride 2
  SeBlock se;
  ConvBn pw_out;  // 4C -> C'
};

struct Block {
  int kernel = 3;
  bool symmetric = true;
  ConvBn lp;       // local perception ahead of the mixer
  Ffn ffn_in;      // symmetric-only
  Mrffi mrffi;
  ConvBn proj;     // pointwise projection closing the mixer residual
  ConvBn lp_out;   // symmetric-only mirrored local conv
  Ffn ffn;
};

struct Model {
  ModelConfig cfg;
  std::array<ConvBn, 4> patch_embed;
  std::array<std::vector<Block>, 3> stages;
  std::array<Downsample, 2> downsamples;
  BatchNormParams head_bn;
  LinearLayer head_fc;
};

// ---------------------------------------------------------------------------
// Construction.
// ---------------------------------------------------------------------------

namespace detail {

inline int ceil_even(double v) {
  int x = static_cast<int>(std::ceil(v));
  return x % 2 ? x + 1 : x;
}

inline ConvBn make_conv(int in_c, int out_c, int k, int stride, int pad, int groups, bool bias,
                        bool bn) {
  ConvBn conv;
  conv.spec = ConvSpec{k, stride, pad, groups};
  conv.weight = Tensor(out_c, in_c / groups, k, k);
  if (bias) conv.bias.assign(out_c, 0.f);
  if (bn) conv.bn = BatchNormParams(out_c);
  return conv;
}

inline LinearLayer make_linear(int in, int out, bool bias) {
  LinearLayer l;
  l.weight = Tensor(out, in, 1, 1);
  if (bias) l.bias.assign(out, 0.f);
  return l;
}

inline ScanHead make_scan_head(int inner, int d_state) {
  ScanHead h;
  h.a_log.assign(static_cast<size_t>(inner) * d_state, 0.f);
  h.dt_proj = make_linear(inner, inner, true);
  h.b_proj = make_linear(inner, d_state, false);
  h.c_proj = make_linear(inner, d_state, false);
  h.d_skip.assign(inner, 1.f);
  return h;
}

inline SelectiveSsmParams make_mamba(int c_g, const MrffiConfig& cfg) {
  SelectiveSsmParams p;
  p.c_g = c_g;
  p.d_state = cfg.d_state;
  p.expand = cfg.expand;
  p.euler_b = cfg.euler_b;
  p.use_d_skip = cfg.use_d_skip;
  const int inner = p.inner();
  p.in_proj = make_linear(c_g, 2 * inner, true);
  p.conv1d_weight = Tensor(inner, 1, 1, 3);
  p.conv1d_bias.assign(inner, 0.f);
  p.out_proj = make_linear(inner, c_g, true);
  p.fwd = make_scan_head(inner, cfg.d_state);
  p.bwd = make_scan_head(inner, cfg.d_state);
  return p;
}

inline Mrffi make_mrffi(int channels, const MrffiConfig& cfg) {
  Mrffi m;
  m.cfg = cfg;
  m.channels = channels;
  m.part = partition(channels, cfg);
  if (m.part.c_g > 0) {
    m.mamba = make_mamba(m.part.c_g, cfg);
    if (cfg.wt_enabled)
      m.wt_conv = make_conv(4 * m.part.c_g, 4 * m.part.c_g, 3, 1, 1, 4 * m.part.c_g, false, true);
  }
  if (m.part.c_l > 0) {
    const int per = m.part.c_l / cfg.n_splits;
    for (int j = 1; j <= cfg.n_splits; ++j) {
      const int k = 2 * j + 1;
      m.mk.splits.push_back(make_conv(per, per, k, 1, k / 2, per, false, true));
    }
  }
  return m;
}

inline Ffn make_ffn(int channels, float ratio) {
  const int hidden = static_cast<int>(channels * ratio);
  Ffn f;
  f.pw1 = make_conv(channels, hidden, 1, 1, 0, 1, false, true);
  f.pw2 = make_conv(hidden, channels, 1, 1, 0, 1, false, true);
  return f;
}

inline Block make_block(int channels, int kernel, const ModelConfig& cfg, int stage) {
  Block b;
  b.kernel = kernel;
  b.symmetric = cfg.symmetric_lp;
  b.lp = make_conv(channels, channels, kernel, 1, kernel / 2, channels, false, true);
  if (b.symmetric) {
    b.ffn_in = make_ffn(channels, cfg.ffn_ratio);
    b.lp_out = make_conv(channels, channels, kernel, 1, kernel / 2, channels, false, true);
  }
  b.mrffi = make_mrffi(channels, cfg.mrffi_config(stage));
  b.proj = make_conv(channels, channels, 1, 1, 0, 1, false, true);
  b.ffn = make_ffn(channels, cfg.ffn_ratio);
  return b;
}

inline Downsample make_downsample(int in_c, int out_c) {
  Downsample d;
  const int hidden = 4 * in_c;
  d.pw_in = make_conv(in_c, hidden, 1, 1, 0, 1, false, true);
  d.dw = make_conv(hidden, hidden, 3, 2, 1, hidden, false, true);
  d.se.fc1 = make_linear(hidden, in_c, true);
  d.se.fc2 = make_linear(in_c, hidden, true);
  d.pw_out = make_conv(hidden, out_c, 1, 1, 0, 1, false, true);
  return d;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parameter registry: deterministic traversal of every learnable array with
// canonical names. Serialization, initialization, and parameter counting all
// derive from this single walk.
// ---------------------------------------------------------------------------

struct ParamRef {
  std::string name;
  float* data = nullptr;
  size_t count = 0;
  std::vector<int> dims;
};

namespace detail {

using ParamFn = std::function<void(const ParamRef&)>;

inline void visit_vec(const std::string& name, std::vector<float>& v, const ParamFn& fn) {
  fn(ParamRef{name, v.data(), v.size(), {static_cast<int>(v.size())}});
}

inline void visit_tensor(const std::string& name, Tensor& t, const ParamFn& fn) {
  fn(ParamRef{name, t.data.data(), t.size(), {t.n, t.c, t.h, t.w}});
}

inline void visit_bn(const std::string& base, BatchNormParams& bn, const ParamFn& fn) {
  visit_vec(base + ".gamma", bn.gamma, fn);
  visit_vec(base + ".beta", bn.beta, fn);
  visit_vec(base + ".mean", bn.mean, fn);
  visit_vec(base + ".var", bn.var, fn);
}

inline void visit_conv(const std::string& base, ConvBn& c, const ParamFn& fn) {
  visit_tensor(base + ".weight", c.weight, fn);
  if (!c.bias.empty()) visit_vec(base + ".bias", c.bias, fn);
  if (c.bn) visit_bn(base + ".bn", *c.bn, fn);
}

inline void visit_linear(const std::string& base, LinearLayer& l, const ParamFn& fn) {
  fn(ParamRef{base + ".weight", l.weight.data.data(), l.weight.size(),
              {l.weight.n, l.weight.c}});
  if (!l.bias.empty()) visit_vec(base + ".bias", l.bias, fn);
}

inline void visit_scan_head(const std::string& base, ScanHead& h, const ParamFn& fn) {
  visit_vec(base + ".a_log", h.a_log, fn);
  visit_linear(base + ".dt_proj", h.dt_proj, fn);
  visit_linear(base + ".b_proj", h.b_proj, fn);
  visit_linear(base + ".c_proj", h.c_proj, fn);
  visit_vec(base + ".d_skip", h.d_skip, fn);
}

inline void visit_mamba(const std::string& base, SelectiveSsmParams& p, const ParamFn& fn) {
  visit_linear(base + ".in_proj", p.in_proj, fn);
  visit_tensor(base + ".conv1d.weight", p.conv1d_weight, fn);
  visit_vec(base + ".conv1d.bias", p.conv1d_bias, fn);
  visit_scan_head(base + ".fwd", p.fwd, fn);
  visit_scan_head(base + ".bwd", p.bwd, fn);
  visit_linear(base + ".out_proj", p.out_proj, fn);
}

inline void visit_mrffi(const std::string& base, Mrffi& m, const ParamFn& fn) {
  if (m.part.c_g > 0) {
    visit_mamba(base + ".mamba", m.mamba, fn);
    if (m.cfg.wt_enabled) visit_conv(base + ".wt.conv", m.wt_conv, fn);
  }
  for (size_t j = 0; j < m.mk.splits.size(); ++j)
    visit_conv(strfmt("%s.mk.%zu", base.c_str(), j), m.mk.splits[j], fn);
}

inline void visit_block(const std::string& base, Block& b, const ParamFn& fn) {
  visit_conv(base + ".lp", b.lp, fn);
  if (b.symmetric) {
    visit_conv(base + ".ffn_in.pw1", b.ffn_in.pw1, fn);
    visit_conv(base + ".ffn_in.pw2", b.ffn_in.pw2, fn);
  }
  visit_mrffi(base + ".mrffi", b.mrffi, fn);
  visit_conv(base + ".mrffi.proj", b.proj, fn);
  if (b.symmetric) visit_conv(base + ".lp_out", b.lp_out, fn);
  visit_conv(base + ".ffn.pw1", b.ffn.pw1, fn);
  visit_conv(base + ".ffn.pw2", b.ffn.pw2, fn);
}

inline void visit_model(Model& m, const ParamFn& fn) {
  for (int i = 0; i < 4; ++i)
    visit_conv(strfmt("patch_embed.conv%d", i + 1), m.patch_embed[i], fn);
  for (int s = 0; s < 3; ++s) {
    for (size_t blk = 0; blk < m.stages[s].size(); ++blk)
      visit_block(strfmt("stage%d.block%zu", s + 1, blk), m.stages[s][blk], fn);
    if (s < 2) {
      const std::string base = strfmt("downsample%d", s + 1);
      Downsample& d = m.downsamples[s];
      visit_conv(base + ".pw_in", d.pw_in, fn);
      visit_conv(base + ".dw", d.dw, fn);
      visit_linear(base + ".se.fc1", d.se.fc1, fn);
      visit_linear(base + ".se.fc2", d.se.fc2, fn);
      visit_conv(base + ".pw_out", d.pw_out, fn);
    }
  }
  visit_bn("head.bn", m.head_bn, fn);
  visit_linear("head.fc", m.head_fc, fn);
}

}  // namespace detail

inline void for_each_param(Model& m, const detail::ParamFn& fn) { detail::visit_model(m, fn); }

/// Visit every convolution bundle (the fusion pass rewrites them in place).
inline void for_each_conv(Model& m, const std::function<void(const std::string&, ConvBn&)>& fn) {
  for (int i = 0; i < 4; ++i) fn(strfmt("patch_embed.conv%d", i + 1), m.patch_embed[i]);
  for (int s = 0; s < 3; ++s) {
    for (size_t blk = 0; blk < m.stages[s].size(); ++blk) {
      const std::string base = strfmt("stage%d.block%zu", s + 1, blk);
      Block& b = m.stages[s][blk];
      fn(base + ".lp", b.lp);
      if (b.symmetric) {
        fn(base + ".ffn_in.pw1", b.ffn_in.pw1);
        fn(base + ".ffn_in.pw2", b.ffn_in.pw2);
      }
      if (b.mrffi.part.c_g > 0 && b.mrffi.cfg.wt_enabled)
        fn(base + ".mrffi.wt.conv", b.mrffi.wt_conv);
      for (size_t j = 0; j < b.mrffi.mk.splits.size(); ++j)
        fn(strfmt("%s.mrffi.mk.%zu", base.c_str(), j), b.mrffi.mk.splits[j]);
      fn(base + ".mrffi.proj", b.proj);
      if (b.symmetric) fn(base + ".lp_out", b.lp_out);
      fn(base + ".ffn.pw1", b.ffn.pw1);
      fn(base + ".ffn.pw2", b.ffn.pw2);
    }
    if (s < 2) {
      const std::string base = strfmt("downsample%d", s + 1);
      fn(base + ".pw_in", m.downsamples[s].pw_in);
      fn(base + ".dw", m.downsamples[s].dw);
      fn(base + ".pw_out", m.downsamples[s].pw_out);
    }
  }
}

inline void for_each_param(const Model& m, const std::function<void(const ParamRef&)>& fn) {
  detail::visit_model(const_cast<Model&>(m), [&](const ParamRef& p) { fn(p); });
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// Learnable parameter count; BN running statistics are buffers and excluded.
inline uint64_t param_count(const Model& m) {
  uint64_t total = 0;
  for_each_param(m, [&](const ParamRef& p) {
    if (ends_with(p.name, ".mean") || ends_with(p.name, ".var")) return;
    total += p.count;
  });
  return total;
}

// ---------------------------------------------------------------------------
// Initialization: truncated normal(0.02) weights, zero biases, identity BN,
// unit d_skip, zero a_log (=> a = -1), dt biases pre-softplus log-uniform in
// [1e-3, 1e-1]. A single seeded stream in registry order.
// ---------------------------------------------------------------------------

inline void init_params(Model& m, uint64_t seed) {
  Rng rng(seed);
  for_each_param(m, [&](const ParamRef& p) {
    float* v = p.data;
    if (ends_with(p.name, ".bn.gamma") || p.name == "head.bn.gamma" ||
        ends_with(p.name, ".bn.var") || p.name == "head.bn.var") {
      for (size_t i = 0; i < p.count; ++i) v[i] = 1.f;
    } else if (ends_with(p.name, ".bn.beta") || ends_with(p.name, ".bn.mean") ||
               p.name == "head.bn.beta" || p.name == "head.bn.mean") {
      for (size_t i = 0; i < p.count; ++i) v[i] = 0.f;
    } else if (ends_with(p.name, ".a_log")) {
      for (size_t i = 0; i < p.count; ++i) v[i] = 0.f;
    } else if (ends_with(p.name, ".d_skip")) {
      for (size_t i = 0; i < p.count; ++i) v[i] = 1.f;
    } else if (ends_with(p.name, ".dt_proj.bias")) {
      for (size_t i = 0; i < p.count; ++i)
        v[i] = softplus_invf32(std::exp(rng.uniform(std::log(1e-3f), std::log(1e-1f))));
    } else if (ends_with(p.name, ".bias")) {
      for (size_t i = 0; i < p.count; ++i) v[i] = 0.f;
    } else {
      for (size_t i = 0; i < p.count; ++i) v[i] = rng.trunc_normal(0.02f);
    }
  });
}

inline Model build_model(const ModelConfig& cfg, uint64_t seed = 0x6d6d) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  const int c1 = cfg.channels[0];
  const std::array<int, 5> ramp = {3, detail::ceil_even(c1 / 8.0), detail::ceil_even(c1 / 4.0),
                                   detail::ceil_even(c1 / 2.0), c1};
  for (int i = 0; i < 4; ++i)
    m.patch_embed[i] = detail::make_conv(ramp[i], ramp[i + 1], 3, 2, 1, 1, false, true);
  for (int s = 0; s < 3; ++s) {
    for (int blk = 0; blk < cfg.depths[s]; ++blk)
      m.stages[s].push_back(detail::make_block(cfg.channels[s], cfg.local_kernels[s], cfg, s));
    if (s < 2) m.downsamples[s] = detail::make_downsample(cfg.channels[s], cfg.channels[s + 1]);
  }
  m.head_bn = BatchNormParams(cfg.channels[2]);
  m.head_fc = detail::make_linear(cfg.channels[2], cfg.num_classes, true);
  init_params(m, seed);
  return m;
}

// ---------------------------------------------------------------------------
// Forward.
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor ffn_forward(const Tensor& x, const Ffn& f) { return f.pw2(gelu(f.pw1(x))); }

inline Tensor se_forward(const Tensor& x, const SeBlock& se) {
  Tensor pooled = global_avg_pool(x);  // [n, c, 1, 1] doubles as [rows=n, c]
  Tensor excite = se.fc2(gelu(se.fc1(pooled)));
  Tensor y(x.n, x.c, x.h, x.w);
  const size_t hw = x.plane();
  for (int img = 0; img < x.n; ++img)
    for (int j = 0; j < x.c; ++j) {
      const float g = sigmoidf32(excite.at(img, j, 0, 0));
      const float* src = x.chan(img, j);
      float* dst = y.chan(img, j);
      for (size_t i = 0; i < hw; ++i) dst[i] = g * src[i];
    }
  return y;
}

inline Tensor block_forward(const Tensor& x, const Block& b) {
  Tensor t = add(x, b.lp(x));
  if (b.symmetric) t = add(t, ffn_forward(t, b.ffn_in));
  t = add(t, b.proj(mrffi_forward(t, b.mrffi)));
  if (b.symmetric) t = add(t, b.lp_out(t));
  return add(t, ffn_forward(t, b.ffn));
}

inline Tensor downsample_forward(const Tensor& x, const Downsample& d) {
  Tensor t = gelu(d.pw_in(x));
  t = gelu(d.dw(t));
  t = se_forward(t, d.se);
  return d.pw_out(t);
}

}  // namespace detail

inline Tensor forward(const Model& m, const Tensor& x) {
  if (x.c != 3 || x.h != m.cfg.resolution || x.w != m.cfg.resolution)
    throw ShapeError(strfmt("model expects n x 3 x %d x %d input, got %s", m.cfg.resolution,
                            m.cfg.resolution, x.shape_str().c_str()));
  Tensor t = x;
  for (int i = 0; i < 4; ++i) {
    t = m.patch_embed[i](t);
    if (i < 3) t = gelu(t);
  }
  for (int s = 0; s < 3; ++s) {
    for (const Block& b : m.stages[s]) t = detail::block_forward(t, b);
    if (s < 2) t = detail::downsample_forward(t, m.downsamples[s]);
  }
  t = global_avg_pool(t);
  t = batchnorm2d(t, m.head_bn);
  return m.head_fc(t);  // [n, num_classes, 1, 1]
}

/// Standard channel normalization for [0,1] RGB input.
inline Tensor imagenet_normalize(const Tensor& x) {
  if (x.c != 3) throw ShapeError(strfmt("normalization expects 3 channels, got %d", x.c));
  static constexpr float kMean[3] = {0.485f, 0.456f, 0.406f};
  static constexpr float kStd[3] = {0.229f, 0.224f, 0.225f};
  Tensor y(x.n, x.c, x.h, x.w);
  const size_t hw = x.plane();
  for (int img = 0; img < x.n; ++img)
    for (int ch = 0; ch < 3; ++ch) {
      const float* src = x.chan(img, ch);
      float* dst = y.chan(img, ch);
      const float mu = kMean[ch], inv = 1.f / kStd[ch];
      for (size_t i = 0; i < hw; ++i) dst[i] = (src[i] - mu) * inv;
    }
  return y;
}

// ---------------------------------------------------------------------------
// Flat layer graph: one row per compute step in execution order, with static
// shapes and cost figures. Multiply-accumulates and per-element ops are
// tracked separately; batch is fixed at 1 (costs are per image).
// ---------------------------------------------------------------------------

enum class LayerKind { Conv, BatchNorm, Linear, Scan, Wavelet, Activation, Elementwise, Pool, Identity };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::BatchNorm: return "bn";
    case LayerKind::Linear: return "linear";
    case LayerKind::Scan: return "scan";
    case LayerKind::Wavelet: return "wavelet";
    case LayerKind::Activation: return "act";
    case LayerKind::Elementwise: return "eltwise";
    case LayerKind::Pool: return "pool";
    case LayerKind::Identity: return "identity";
  }
  return "?";
}

struct GraphLayer {
  std::string name;
  LayerKind kind = LayerKind::Conv;
  int stage = 0;            // 0 = stem, 1..3 = stages (downsample with its stage), 4 = head
  std::string branch;       // embed/lp/ffn/mamba/wt/mk/identity/proj/downsample/head/add
  std::array<int, 3> in_shape{};   // c, h, w
  std::array<int, 3> out_shape{};
  uint64_t macs = 0;
  uint64_t params = 0;
  uint64_t elementwise = 0;
};

struct BlockGraph {
  std::string model_name;
  int resolution = 0;
  std::vector<GraphLayer> layers;

  /// Conv/BN/linear rows: the weight-bearing layer count the fusion pass
  /// shrinks.
  int compute_layer_count() const {
    int n = 0;
    for (const auto& l : layers)
      if (l.kind == LayerKind::Conv || l.kind == LayerKind::BatchNorm ||
          l.kind == LayerKind::Linear)
        ++n;
    return n;
  }
};

/// MAC budget per scan step per inner channel per direction: discretization 4
/// (delta*a and a 3-MAC exponential allowance), input coupling 2, state
/// update 1, readout 1, direct feedthrough 1.
constexpr uint64_t kScanStepMacs = 9;

namespace detail {

struct GraphBuilder {
  BlockGraph g;
  int stage = 0;
  std::string branch;
  std::array<int, 3> shape{};  // current c, h, w

  void row(const std::string& name, LayerKind kind, std::array<int, 3> out, uint64_t macs,
           uint64_t params, uint64_t elementwise) {
    g.layers.push_back({name, kind, stage, branch, shape, out, macs, params, elementwise});
    shape = out;
  }

  void conv(const std::string& name, const ConvBn& c) {
    const auto& s = c.spec;
    if (shape[0] != c.weight.c * s.groups)
      throw ShapeError(strfmt("graph: %s expects %d channels, has %d", name.c_str(),
                              c.weight.c * s.groups, shape[0]));
    const int oh = s.out_dim(shape[1]), ow = s.out_dim(shape[2]);
    const int oc = c.weight.n;
    const uint64_t outel = static_cast<uint64_t>(oc) * oh * ow;
    row(name, LayerKind::Conv, {oc, oh, ow}, outel * c.weight.c * s.kernel * s.kernel,
        c.weight.size() + c.bias.size(), 0);
    if (c.bn) row(name + ".bn", LayerKind::BatchNorm, shape, 0, 2ull * oc, outel);
  }

  void act(const std::string& name) {
    row(name, LayerKind::Activation, shape, 0, 0,
        static_cast<uint64_t>(shape[0]) * shape[1] * shape[2]);
  }

  void addrow(const std::string& name) {
    row(name, LayerKind::Elementwise, shape, 0, 0,
        static_cast<uint64_t>(shape[0]) * shape[1] * shape[2]);
  }
};

inline void graph_mamba(GraphBuilder& b, const std::string& base, const SelectiveSsmParams& p) {
  const uint64_t L = static_cast<uint64_t>(b.shape[1]) * b.shape[2];
  const int inner = p.inner();
  const std::array<int, 3> tok_in = b.shape;
  b.row(base + ".in_proj", LayerKind::Linear, {2 * inner, b.shape[1], b.shape[2]},
        L * p.c_g * 2 * inner, p.in_proj.weight.size() + p.in_proj.bias.size(), 0);
  b.row(base + ".conv1d", LayerKind::Conv, {inner, b.shape[1], b.shape[2]},
        L * inner * p.conv1d_weight.w, p.conv1d_weight.size() + p.conv1d_bias.size(), 0);
  b.act(base + ".silu");
  for (const char* dir : {"fwd", "bwd"}) {
    const ScanHead& h = std::string(dir) == "fwd" ? p.fwd : p.bwd;
    const std::string hb = base + "." + dir;
    b.row(hb + ".dt_proj", LayerKind::Linear, b.shape, L * inner * inner,
          h.dt_proj.weight.size() + h.dt_proj.bias.size(), 0);
    b.row(hb + ".b_proj", LayerKind::Linear, b.shape, L * inner * p.d_state,
          h.b_proj.weight.size(), 0);
    b.row(hb + ".c_proj", LayerKind::Linear, b.shape, L * inner * p.d_state,
          h.c_proj.weight.size(), 0);
    b.row(hb + ".scan", LayerKind::Scan, b.shape, kScanStepMacs * inner * L,
          h.a_log.size() + h.d_skip.size(), 0);
  }
  b.row(base + ".gate", LayerKind::Elementwise, b.shape, 0, 0, L * inner * 2);
  b.row(base + ".out_proj", LayerKind::Linear, {p.c_g, tok_in[1], tok_in[2]},
        L * inner * p.c_g, p.out_proj.weight.size() + p.out_proj.bias.size(), 0);
}

inline void graph_mrffi(GraphBuilder& b, const std::string& base, const Mrffi& m) {
  const std::array<int, 3> in = b.shape;
  const Partition& p = m.part;
  if (p.c_g > 0) {
    b.branch = "mamba";
    b.shape = {p.c_g, in[1], in[2]};
    graph_mamba(b, base + ".mamba", m.mamba);
    if (m.cfg.wt_enabled) {
      b.branch = "wt";
      const int h2 = (in[1] + 1) / 2, w2 = (in[2] + 1) / 2;
      const uint64_t coeffs = 4ull * p.c_g * h2 * w2;
      b.shape = {p.c_g, in[1], in[2]};
      b.row(base + ".wt.dec", LayerKind::Wavelet, {4 * p.c_g, h2, w2}, 4 * coeffs, 0, 0);
      b.conv(base + ".wt.conv", m.wt_conv);
      b.row(base + ".wt.rec", LayerKind::Wavelet, {p.c_g, in[1], in[2]},
            4ull * p.c_g * in[1] * in[2], 0, 0);
      b.addrow(base + ".wt.add");
    }
  }
  if (p.c_l > 0) {
    b.branch = "mk";
    const int per = p.c_l / static_cast<int>(m.mk.splits.size());
    for (size_t j = 0; j < m.mk.splits.size(); ++j) {
      b.shape = {per, in[1], in[2]};
      b.conv(strfmt("%s.mk.%zu", base.c_str(), j), m.mk.splits[j]);
    }
  }
  if (p.c_id > 0) {
    b.branch = "identity";
    b.shape = {p.c_id, in[1], in[2]};
    b.row(base + ".identity", LayerKind::Identity, b.shape, 0, 0, 0);
  }
  b.shape = in;  // concat restores the full width
}

inline void graph_block(GraphBuilder& b, const std::string& base, const Block& blk) {
  b.branch = "lp";
  b.conv(base + ".lp", blk.lp);
  b.addrow(base + ".lp.add");
  if (blk.symmetric) {
    b.branch = "ffn";
    b.conv(base + ".ffn_in.pw1", blk.ffn_in.pw1);
    b.act(base + ".ffn_in.gelu");
    b.conv(base + ".ffn_in.pw2", blk.ffn_in.pw2);
    b.addrow(base + ".ffn_in.add");
  }
  graph_mrffi(b, base + ".mrffi", blk.mrffi);
  b.branch = "proj";
  b.conv(base + ".mrffi.proj", blk.proj);
  b.addrow(base + ".mrffi.add");
  if (blk.symmetric) {
    b.branch = "lp";
    b.conv(base + ".lp_out", blk.lp_out);
    b.addrow(base + ".lp_out.add");
  }
  b.branch = "ffn";
  b.conv(base + ".ffn.pw1", blk.ffn.pw1);
  b.act(base + ".ffn.gelu");
  b.conv(base + ".ffn.pw2", blk.ffn.pw2);
  b.addrow(base + ".ffn.add");
}

}  // namespace detail

inline BlockGraph build_graph(const Model& m) {
  detail::GraphBuilder b;
  b.g.model_name = m.cfg.name;
  b.g.resolution = m.cfg.resolution;
  b.stage = 0;
  b.branch = "embed";
  b.shape = {3, m.cfg.resolution, m.cfg.resolution};
  for (int i = 0; i < 4; ++i) {
    b.conv(strfmt("patch_embed.conv%d", i + 1), m.patch_embed[i]);
    if (i < 3) b.act(strfmt("patch_embed.gelu%d", i + 1));
  }
  for (int s = 0; s < 3; ++s) {
    b.stage = s + 1;
    for (size_t blk = 0; blk < m.stages[s].size(); ++blk)
      detail::graph_block(b, strfmt("stage%d.block%zu", s + 1, blk), m.stages[s][blk]);
    if (s < 2) {
      b.branch = "downsample";
      const std::string base = strfmt("downsample%d", s + 1);
      const Downsample& d = m.downsamples[s];
      b.conv(base + ".pw_in", d.pw_in);
      b.act(base + ".gelu1");
      b.conv(base + ".dw", d.dw);
      b.act(base + ".gelu2");
      // Squeeze-excite: pool, two linears on one token, gate multiply.
      b.row(base + ".se.pool", LayerKind::Pool, b.shape, 0, 0,
            static_cast<uint64_t>(b.shape[0]) * b.shape[1] * b.shape[2]);
      b.row(base + ".se.fc1", LayerKind::Linear, b.shape,
            static_cast<uint64_t>(d.se.fc1.in()) * d.se.fc1.out(),
            d.se.fc1.weight.size() + d.se.fc1.bias.size(), 0);
      b.row(base + ".se.fc2", LayerKind::Linear, b.shape,
            static_cast<uint64_t>(d.se.fc2.in()) * d.se.fc2.out(),
            d.se.fc2.weight.size() + d.se.fc2.bias.size(), 0);
      b.row(base + ".se.scale", LayerKind::Elementwise, b.shape, 0, 0,
            static_cast<uint64_t>(b.shape[0]) * b.shape[1] * b.shape[2]);
      b.conv(base + ".pw_out", d.pw_out);
    }
  }
  b.stage = 4;
  b.branch = "head";
  b.row("head.pool", LayerKind::Pool, {b.shape[0], 1, 1}, 0, 0,
        static_cast<uint64_t>(b.shape[0]) * b.shape[1] * b.shape[2]);
  b.row("head.bn", LayerKind::BatchNorm, b.shape, 0, 2ull * b.shape[0],
        static_cast<uint64_t>(b.shape[0]));
  b.row("head.fc", LayerKind::Linear, {m.cfg.num_classes, 1, 1},
        static_cast<uint64_t>(m.head_fc.in()) * m.head_fc.out(),
        m.head_fc.weight.size() + m.head_fc.bias.size(), 0);
  return std::move(b.g);
}

}  // namespace mm
