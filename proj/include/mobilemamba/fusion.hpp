#pragma once

#include "mobilemamba/model.hpp"

namespace mm {

// ---------------------------------------------------------------------------
// Inference-time normalization fusion: every conv followed by BN absorbs the
// normalization into its weights and bias. The head BN follows a pooling
// layer, has no producer to fold into, and stays in place.
// ---------------------------------------------------------------------------

struct FusionReport {
  int layers_before = 0;  // weight-bearing (conv/bn/linear) rows
  int layers_after = 0;
  std::vector<std::pair<std::string, std::string>> fused_pairs;  // (producer, bn)
  std::vector<std::string> unfused_bn;
  float max_abs_divergence = -1.f;  // < 0: no probe run

  std::string summary() const {
    std::string s = strfmt("layers %d -> %d, %zu pairs folded", layers_before, layers_after,
                           fused_pairs.size());
    for (const std::string& n : unfused_bn) s += strfmt(", kept %s", n.c_str());
    if (max_abs_divergence >= 0.f)
      s += strfmt(", probe divergence %.3g", static_cast<double>(max_abs_divergence));
    return s;
  }
};

/// w'_c = w_c * s_c, b'_c = (b_c - mean_c) * s_c + beta_c with
/// s_c = gamma_c / sqrt(var_c + eps). Empty bias counts as zeros.
inline std::pair<Tensor, std::vector<float>> fold_bn(const Tensor& w, const std::vector<float>& b,
                                                     const BatchNormParams& p) {
  p.validate();
  const int out_c = w.n;
  if (p.channels() != out_c)
    throw ShapeError(strfmt("folding %d-channel norm into %d-channel weights", p.channels(),
                            out_c));
  if (!b.empty() && static_cast<int>(b.size()) != out_c)
    throw ShapeError(strfmt("bias has %zu entries for %d channels", b.size(), out_c));
  Tensor w2 = w;
  std::vector<float> b2(out_c);
  const size_t per_chan = w.size() / out_c;
  for (int ch = 0; ch < out_c; ++ch) {
    const float s = p.gamma[ch] / std::sqrt(p.var[ch] + p.eps);
    float* dst = w2.data.data() + static_cast<size_t>(ch) * per_chan;
    for (size_t i = 0; i < per_chan; ++i) dst[i] *= s;
    b2[ch] = ((b.empty() ? 0.f : b[ch]) - p.mean[ch]) * s + p.beta[ch];
  }
  return {std::move(w2), std::move(b2)};
}

/// Returns the fused copy plus a report. With probe_inputs > 0, both models
/// run on that many seeded random images and the pass fails loudly if the
/// outputs drift beyond tolerance.
inline std::pair<Model, FusionReport> fuse_model(const Model& m, int probe_inputs = 0,
                                                 uint64_t probe_seed = 77,
                                                 float tolerance = 1e-4f) {
  Model fused = m;
  FusionReport rep;
  rep.layers_before = build_graph(m).compute_layer_count();
  for_each_conv(fused, [&](const std::string& name, ConvBn& c) {
    if (!c.bn) return;
    auto [w2, b2] = fold_bn(c.weight, c.bias, *c.bn);
    c.weight = std::move(w2);
    c.bias = std::move(b2);
    c.bn.reset();
    rep.fused_pairs.emplace_back(name, name + ".bn");
  });
  rep.unfused_bn.push_back("head.bn");
  rep.layers_after = build_graph(fused).compute_layer_count();
  if (probe_inputs > 0) {
    Rng rng(probe_seed);
    Tensor x(probe_inputs, 3, m.cfg.resolution, m.cfg.resolution);
    for (float& v : x.data) v = rng.uniform(-1.f, 1.f);
    const Tensor a = forward(m, x);
    const Tensor b = forward(fused, x);
    float worst = 0.f;
    for (size_t i = 0; i < a.size(); ++i)
      worst = std::max(worst, std::fabs(a.data[i] - b.data[i]));
    rep.max_abs_divergence = worst;
    if (!(worst <= tolerance))
      throw Error(strfmt("fusion drift %.3g exceeds tolerance %.3g",
                         static_cast<double>(worst), static_cast<double>(tolerance)));
  }
  return {std::move(fused), std::move(rep)};
}

}  // namespace mm
