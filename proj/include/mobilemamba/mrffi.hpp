#pragma once

#include "mobilemamba/ssm.hpp"
#include "mobilemamba/wavelet.hpp"

namespace mm {

// ---------------------------------------------------------------------------
// Multi-receptive-field feature interaction: channels are partitioned into a
// global slice (bidirectional mixer + wavelet branch), a local slice
// (multi-kernel depthwise conv), and an identity slice that passes through
// untouched. The three results are concatenated in that fixed order.
// ---------------------------------------------------------------------------

struct MrffiConfig {
  float xi = 0.f;          // global channel fraction
  float mu = 0.f;          // local channel fraction
  int n_splits = 1;        // local branch split count; kernels 3, 5, ..., 2n+1
  bool wt_enabled = true;  // wavelet branch on the global slice
  int d_state = 1;
  int expand = 2;
  bool euler_b = false;
  bool use_d_skip = true;

  void validate() const {
    if (xi < 0.f || xi > 1.f) throw ConfigError(strfmt("global fraction %g outside [0, 1]", xi));
    if (mu < 0.f) throw ConfigError(strfmt("local fraction %g negative", mu));
    if (xi + mu > 1.f + 1e-6f)
      throw ConfigError(strfmt("channel fractions %g + %g exceed 1", xi, mu));
    if (n_splits < 1) throw ConfigError(strfmt("split count must be >= 1, got %d", n_splits));
    if (d_state < 1) throw ConfigError(strfmt("state size must be >= 1, got %d", d_state));
    if (expand < 1) throw ConfigError(strfmt("expand ratio must be >= 1, got %d", expand));
  }
};

struct Partition {
  int c_g = 0, c_l = 0, c_id = 0;
};

/// Floor the global slice, floor the local slice to a multiple of n_splits,
/// remainder to identity. Conservation c_g + c_l + c_id = c always holds.
inline Partition partition(int c, const MrffiConfig& cfg) {
  cfg.validate();
  if (c < 1) throw ConfigError(strfmt("channel count must be >= 1, got %d", c));
  Partition p;
  p.c_g = static_cast<int>(cfg.xi * static_cast<float>(c));
  p.c_l = static_cast<int>(cfg.mu * static_cast<float>(c));
  p.c_l -= p.c_l % cfg.n_splits;
  p.c_id = c - p.c_g - p.c_l;
  return p;
}

/// Local branch: n equal channel groups, group j (1-based) convolved
/// depthwise with kernel 2j+1, each followed by BN, concatenated back.
struct MkDeconv {
  std::vector<ConvBn> splits;
};

inline Tensor mk_deconv(const Tensor& x_l, const MkDeconv& w) {
  const int n = static_cast<int>(w.splits.size());
  if (n == 0) throw ConfigError("local branch has no splits");
  if (x_l.c % n != 0)
    throw ShapeError(strfmt("local channels %d not divisible by %d splits", x_l.c, n));
  if (n == 1) return w.splits[0](x_l);
  const int per = x_l.c / n;
  std::vector<Tensor> outs;
  outs.reserve(n);
  for (int j = 0; j < n; ++j) outs.push_back(w.splits[j](slice_channels(x_l, j * per, per)));
  return concat_channels(outs);
}

struct Mrffi {
  MrffiConfig cfg;
  int channels = 0;
  Partition part;
  SelectiveSsmParams mamba;  // global slice mixer
  ConvBn wt_conv;            // depthwise 3x3 on the 4*c_g coefficient channels
  MkDeconv mk;               // local slice
};

inline Tensor mrffi_forward(const Tensor& x, const Mrffi& m) {
  if (x.c != m.channels)
    throw ShapeError(strfmt("module built for %d channels, input has %d", m.channels, x.c));
  const Partition& p = m.part;
  if (p.c_g == x.c) {
    Tensor g = mamba_mixer(x, m.mamba);
    return m.cfg.wt_enabled ? add(g, wte_branch(x, m.wt_conv)) : g;
  }
  std::vector<Tensor> outs;
  if (p.c_g > 0) {
    Tensor xg = slice_channels(x, 0, p.c_g);
    Tensor g = mamba_mixer(xg, m.mamba);
    if (m.cfg.wt_enabled) g = add(g, wte_branch(xg, m.wt_conv));
    outs.push_back(std::move(g));
  }
  if (p.c_l > 0) outs.push_back(mk_deconv(slice_channels(x, p.c_g, p.c_l), m.mk));
  if (p.c_id > 0) outs.push_back(slice_channels(x, p.c_g + p.c_l, p.c_id));
  return outs.size() == 1 ? std::move(outs[0]) : concat_channels(outs);
}

}  // namespace mm
