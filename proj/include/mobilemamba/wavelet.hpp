#pragma once

#include "mobilemamba/tensor.hpp"

namespace mm {

// ---------------------------------------------------------------------------
// Single-level 2-D Haar transform. The scaled bank (entries +-1/2) is
// orthonormal, so analysis followed by synthesis with the same filters is an
// exact inverse and energy is preserved. Odd inputs are zero-padded on the
// bottom/right before analysis and cropped after synthesis.
// ---------------------------------------------------------------------------

struct HaarFilterBank {
  // Band order: LL, LH (horizontal detail), HL (vertical), HH (diagonal).
  float f[4][2][2] = {
      {{0.5f, 0.5f}, {0.5f, 0.5f}},
      {{0.5f, -0.5f}, {0.5f, -0.5f}},
      {{0.5f, 0.5f}, {-0.5f, -0.5f}},
      {{0.5f, -0.5f}, {-0.5f, 0.5f}},
  };
};

/// Stride-2 correlation of every channel with the four filters. Output is
/// n x 4c x ceil(h/2) x ceil(w/2), channels grouped [LL | LH | HL | HH].
inline Tensor wt2d(const Tensor& x, const HaarFilterBank& bank = {}) {
  const int oh = (x.h + 1) / 2;
  const int ow = (x.w + 1) / 2;
  Tensor y(x.n, 4 * x.c, oh, ow);
  parallel_for(static_cast<size_t>(x.n) * x.c, [&](size_t lo, size_t hi) {
    for (size_t job = lo; job < hi; ++job) {
      const int img = static_cast<int>(job) / x.c;
      const int ch = static_cast<int>(job) % x.c;
      const float* src = x.chan(img, ch);
      for (int b = 0; b < 4; ++b) {
        float* dst = y.chan(img, b * x.c + ch);
        const float f00 = bank.f[b][0][0], f01 = bank.f[b][0][1];
        const float f10 = bank.f[b][1][0], f11 = bank.f[b][1][1];
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = 2 * oy;
          const float* r0 = src + static_cast<size_t>(iy) * x.w;
          const float* r1 = (iy + 1 < x.h) ? r0 + x.w : nullptr;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = 2 * ox;
            const bool has_x1 = ix + 1 < x.w;
            float acc = f00 * r0[ix];
            if (has_x1) acc += f01 * r0[ix + 1];
            if (r1) {
              acc += f10 * r1[ix];
              if (has_x1) acc += f11 * r1[ix + 1];
            }
            dst[static_cast<size_t>(oy) * ow + ox] = acc;
          }
        }
      }
    }
  });
  return y;
}

/// Transposed stride-2 correlation (synthesis). Inverse of wt2d on even dims;
/// out_h/out_w crop the result when the analysis side padded an odd input.
/// Zero crop arguments keep the full 2h' x 2w' extent.
inline Tensor iwt2d(const Tensor& y, const HaarFilterBank& bank = {}, int out_h = 0,
                    int out_w = 0) {
  if (y.c % 4 != 0)
    throw ShapeError(strfmt("synthesis input has %d channels, not a multiple of 4", y.c));
  const int c = y.c / 4;
  const int full_h = 2 * y.h, full_w = 2 * y.w;
  if (out_h == 0) out_h = full_h;
  if (out_w == 0) out_w = full_w;
  if (out_h > full_h || out_h < full_h - 1 || out_w > full_w || out_w < full_w - 1)
    throw ShapeError(strfmt("crop %dx%d incompatible with synthesis extent %dx%d", out_h, out_w,
                            full_h, full_w));
  Tensor x(y.n, c, out_h, out_w);
  parallel_for(static_cast<size_t>(y.n) * c, [&](size_t lo, size_t hi) {
    for (size_t job = lo; job < hi; ++job) {
      const int img = static_cast<int>(job) / c;
      const int ch = static_cast<int>(job) % c;
      const float* bands[4];
      for (int b = 0; b < 4; ++b) bands[b] = y.chan(img, b * c + ch);
      float* dst = x.chan(img, ch);
      for (int oy = 0; oy < out_h; ++oy) {
        const int cy = oy / 2, dy = oy % 2;
        const float* row0 = bands[0] + static_cast<size_t>(cy) * y.w;
        const float* row1 = bands[1] + static_cast<size_t>(cy) * y.w;
        const float* row2 = bands[2] + static_cast<size_t>(cy) * y.w;
        const float* row3 = bands[3] + static_cast<size_t>(cy) * y.w;
        for (int ox = 0; ox < out_w; ++ox) {
          const int cx = ox / 2, dx = ox % 2;
          dst[static_cast<size_t>(oy) * out_w + ox] =
              bank.f[0][dy][dx] * row0[cx] + bank.f[1][dy][dx] * row1[cx] +
              bank.f[2][dy][dx] * row2[cx] + bank.f[3][dy][dx] * row3[cx];
        }
      }
    }
  });
  return x;
}

/// Wavelet-domain enhancement: analyze, run a coefficient-space conv (with
/// or without its normalization folded in), synthesize back to the input
/// extent.
inline Tensor wte_branch(const Tensor& x, const ConvBn& conv, const HaarFilterBank& bank = {}) {
  return iwt2d(conv(wt2d(x, bank)), bank, x.h, x.w);
}

/// Convenience form taking the depthwise 3x3 weights and normalization
/// directly.
inline Tensor wte_branch(const Tensor& x, const Tensor& conv_weight, const BatchNormParams& bn,
                         const HaarFilterBank& bank = {}) {
  ConvBn conv;
  conv.spec.kernel = 3;
  conv.spec.padding = 1;
  conv.spec.groups = 4 * x.c;
  conv.weight = conv_weight;
  conv.bn = bn;
  return wte_branch(x, conv, bank);
}

}  // namespace mm
