#pragma once

#include "mobilemamba/ssm.hpp"

namespace mm {

// ---------------------------------------------------------------------------
// Slow reference implementations, kept deliberately independent of the
// production kernels so the verification suite has something to disagree
// with. No fast paths, no shared loop structure.
// ---------------------------------------------------------------------------

inline Tensor naive_conv2d(const Tensor& x, const Tensor& weight, const std::vector<float>& bias,
                           const ConvSpec& spec) {
  spec.validate();
  const int out_c = weight.n;
  const int in_cg = x.c / spec.groups;
  const int out_cg = out_c / spec.groups;
  const int oh = spec.out_dim(x.h), ow = spec.out_dim(x.w);
  Tensor y(x.n, out_c, oh, ow);
  for (int img = 0; img < x.n; ++img)
    for (int oc = 0; oc < out_c; ++oc)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          float acc = bias.empty() ? 0.f : bias[oc];
          const int g = oc / out_cg;
          for (int icg = 0; icg < in_cg; ++icg)
            for (int ky = 0; ky < spec.kernel; ++ky)
              for (int kx = 0; kx < spec.kernel; ++kx) {
                const int iy = oy * spec.stride - spec.padding + ky;
                const int ix = ox * spec.stride - spec.padding + kx;
                if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                acc += x.at(img, g * in_cg + icg, iy, ix) * weight.at(oc, icg, ky, kx);
              }
          y.at(img, oc, oy, ox) = acc;
        }
  return y;
}

/// Token-major scalar selective scan. Backward is realized by physically
/// reversing the token rows, scanning forward, and reversing the result.
inline Tensor naive_selective_scan(const Tensor& tokens, const SelectiveSsmParams& p,
                                   ScanDirection dir) {
  const int L = tokens.n;
  const int inner = tokens.c;
  const int M = p.d_state;
  const ScanHead& head = dir == ScanDirection::Forward ? p.fwd : p.bwd;
  auto tok = [&](int t, int i) {
    const int row = dir == ScanDirection::Backward ? L - 1 - t : t;
    return tokens.data[static_cast<size_t>(row) * inner + i];
  };
  Tensor y(L, inner, 1, 1);
  std::vector<float> h(static_cast<size_t>(inner) * M, 0.f);
  std::vector<float> dt(inner), bvec(M), cvec(M);
  for (int t = 0; t < L; ++t) {
    for (int i = 0; i < inner; ++i) {
      float acc = head.dt_proj.bias[i];
      for (int j = 0; j < inner; ++j) acc += head.dt_proj.weight.at(i, j, 0, 0) * tok(t, j);
      dt[i] = softplusf32(acc);
    }
    for (int d = 0; d < M; ++d) {
      float accb = 0.f, accc = 0.f;
      for (int j = 0; j < inner; ++j) {
        accb += head.b_proj.weight.at(d, j, 0, 0) * tok(t, j);
        accc += head.c_proj.weight.at(d, j, 0, 0) * tok(t, j);
      }
      bvec[d] = accb;
      cvec[d] = accc;
    }
    for (int i = 0; i < inner; ++i) {
      float out = 0.f;
      for (int d = 0; d < M; ++d) {
        const float a = -std::exp(head.a_log[static_cast<size_t>(i) * M + d]);
        const float z = dt[i] * a;
        const float a_bar = std::exp(z);
        float b_bar;
        if (p.euler_b)
          b_bar = dt[i] * bvec[d];
        else if (std::fabs(z) > kTaylorTau)
          b_bar = std::expm1(z) / a * bvec[d];
        else
          b_bar = dt[i] * bvec[d] * (1.f + 0.5f * z);
        float& state = h[static_cast<size_t>(i) * M + d];
        state = a_bar * state + b_bar * tok(t, i);
        out += cvec[d] * state;
      }
      if (p.use_d_skip) out += head.d_skip[i] * tok(t, i);
      const int row = dir == ScanDirection::Backward ? L - 1 - t : t;
      y.data[static_cast<size_t>(row) * inner + i] = out;
    }
  }
  return y;
}

}  // namespace mm
