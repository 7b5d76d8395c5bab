#pragma once

#include <cstring>
#include <initializer_list>
#include <optional>
#include <vector>

#include "mobilemamba/common.hpp"

namespace mm {

// ---------------------------------------------------------------------------
// Dense NCHW f32 tensor, row-major with w fastest. Convolution weights reuse
// the same container as [out_c, in_c/groups, kh, kw]; token matrices as
// [rows, cols, 1, 1].
// ---------------------------------------------------------------------------

struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<float> data;

  Tensor() = default;

  Tensor(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {
    if (n_ < 1 || c_ < 1 || h_ < 1 || w_ < 1)
      throw ShapeError(strfmt("tensor dims must be >= 1, got %dx%dx%dx%d", n_, c_, h_, w_));
    data.assign(size(), 0.f);
  }

  Tensor(int n_, int c_, int h_, int w_, std::vector<float> values) : Tensor(n_, c_, h_, w_) {
    if (values.size() != size())
      throw ShapeError(strfmt("tensor %dx%dx%dx%d expects %zu values, got %zu", n_, c_, h_, w_,
                              size(), values.size()));
    data = std::move(values);
  }

  size_t size() const {
    return static_cast<size_t>(n) * c * h * w;
  }

  size_t plane() const { return static_cast<size_t>(h) * w; }

  float& at(int i, int j, int k, int l) {
    return data[((static_cast<size_t>(i) * c + j) * h + k) * w + l];
  }
  float at(int i, int j, int k, int l) const {
    return data[((static_cast<size_t>(i) * c + j) * h + k) * w + l];
  }

  float* chan(int i, int j) { return data.data() + (static_cast<size_t>(i) * c + j) * plane(); }
  const float* chan(int i, int j) const {
    return data.data() + (static_cast<size_t>(i) * c + j) * plane();
  }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  std::string shape_str() const { return strfmt("%dx%dx%dx%d", n, c, h, w); }
};

// ---------------------------------------------------------------------------
// Layer parameter bundles.
// ---------------------------------------------------------------------------

struct ConvSpec {
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  int groups = 1;

  void validate() const {
    if (kernel < 1) throw ConfigError(strfmt("conv kernel must be >= 1, got %d", kernel));
    if (stride < 1) throw ConfigError(strfmt("conv stride must be >= 1, got %d", stride));
    if (padding < 0) throw ConfigError(strfmt("conv padding must be >= 0, got %d", padding));
    if (groups < 1) throw ConfigError(strfmt("conv groups must be >= 1, got %d", groups));
  }

  int out_dim(int in) const {
    int out = (in + 2 * padding - kernel) / stride + 1;
    return out;
  }
};

struct BatchNormParams {
  std::vector<float> gamma, beta, mean, var;
  float eps = 1e-5f;

  BatchNormParams() = default;

  /// Identity normalization over `channels` (gamma 1, beta 0, mean 0, var 1).
  explicit BatchNormParams(int channels)
      : gamma(channels, 1.f), beta(channels, 0.f), mean(channels, 0.f), var(channels, 1.f) {}

  int channels() const { return static_cast<int>(gamma.size()); }

  void validate() const {
    size_t c = gamma.size();
    if (c == 0 || beta.size() != c || mean.size() != c || var.size() != c)
      throw ShapeError(strfmt("batchnorm parameter lengths disagree: %zu/%zu/%zu/%zu",
                              gamma.size(), beta.size(), mean.size(), var.size()));
    for (size_t i = 0; i < c; ++i)
      if (var[i] + eps <= 0.f)
        throw ConfigError(strfmt("batchnorm var[%zu] + eps = %g is not positive", i,
                                 static_cast<double>(var[i]) + eps));
  }
};

// ---------------------------------------------------------------------------
// Operators. Convolution is cross-correlation (no kernel flip) with zero
// padding; every output element is reduced sequentially so results do not
// depend on the thread count.
// ---------------------------------------------------------------------------

/// bias may be empty (no bias). weight is [out_c, in_c/groups, k, k].
inline Tensor conv2d(const Tensor& x, const Tensor& weight, const std::vector<float>& bias,
                     const ConvSpec& spec) {
  spec.validate();
  const int out_c = weight.n;
  if (x.c % spec.groups != 0)
    throw ShapeError(strfmt("conv input channels %d not divisible by groups %d", x.c, spec.groups));
  if (out_c % spec.groups != 0)
    throw ShapeError(
        strfmt("conv output channels %d not divisible by groups %d", out_c, spec.groups));
  const int in_cg = x.c / spec.groups;
  const int out_cg = out_c / spec.groups;
  if (weight.c != in_cg)
    throw ShapeError(strfmt("conv weight expects %d input channels per group, input provides %d",
                            weight.c, in_cg));
  if (weight.h != spec.kernel || weight.w != spec.kernel)
    throw ShapeError(strfmt("conv weight is %dx%d but spec kernel is %d", weight.h, weight.w,
                            spec.kernel));
  if (!bias.empty() && static_cast<int>(bias.size()) != out_c)
    throw ShapeError(strfmt("conv bias has %zu entries for %d output channels", bias.size(), out_c));
  const int oh = spec.out_dim(x.h);
  const int ow = spec.out_dim(x.w);
  if (oh < 1 || ow < 1)
    throw ShapeError(strfmt("conv output %dx%d collapses below 1x1 (input %dx%d kernel %d stride "
                            "%d pad %d)",
                            oh, ow, x.h, x.w, spec.kernel, spec.stride, spec.padding));

  Tensor y(x.n, out_c, oh, ow);
  const int k = spec.kernel;
  const int s = spec.stride;
  const int p = spec.padding;

  if (k == 1 && s == 1 && p == 0 && spec.groups == 1) {
    // Pointwise: per-image matmul Y[oc, hw] = sum_ic W[oc, ic] * X[ic, hw].
    const size_t hw = x.plane();
    parallel_for(static_cast<size_t>(x.n) * out_c, [&](size_t lo, size_t hi) {
      for (size_t job = lo; job < hi; ++job) {
        const int img = static_cast<int>(job) / out_c;
        const int oc = static_cast<int>(job) % out_c;
        float* dst = y.chan(img, oc);
        const float b = bias.empty() ? 0.f : bias[oc];
        for (size_t i = 0; i < hw; ++i) dst[i] = b;
        const float* wrow = weight.data.data() + static_cast<size_t>(oc) * x.c;
        for (int ic = 0; ic < x.c; ++ic) {
          const float wv = wrow[ic];
          if (wv == 0.f) continue;
          const float* src = x.chan(img, ic);
          for (size_t i = 0; i < hw; ++i) dst[i] += wv * src[i];
        }
      }
    });
    return y;
  }

  if (spec.groups == x.c && out_cg >= 1 && in_cg == 1) {
    // Depthwise (possibly with channel multiplier).
    parallel_for(static_cast<size_t>(x.n) * out_c, [&](size_t lo, size_t hi) {
      for (size_t job = lo; job < hi; ++job) {
        const int img = static_cast<int>(job) / out_c;
        const int oc = static_cast<int>(job) % out_c;
        const int ic = oc / out_cg;
        const float* src = x.chan(img, ic);
        const float* ker = weight.data.data() + static_cast<size_t>(oc) * k * k;
        float* dst = y.chan(img, oc);
        const float b = bias.empty() ? 0.f : bias[oc];
        for (int oy = 0; oy < oh; ++oy) {
          const int iy0 = oy * s - p;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix0 = ox * s - p;
            float acc = b;
            for (int ky = 0; ky < k; ++ky) {
              const int iy = iy0 + ky;
              if (iy < 0 || iy >= x.h) continue;
              const float* row = src + static_cast<size_t>(iy) * x.w;
              const float* krow = ker + static_cast<size_t>(ky) * k;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ix0 + kx;
                if (ix < 0 || ix >= x.w) continue;
                acc += krow[kx] * row[ix];
              }
            }
            dst[static_cast<size_t>(oy) * ow + ox] = acc;
          }
        }
      }
    });
    return y;
  }

  // General grouped convolution.
  parallel_for(static_cast<size_t>(x.n) * out_c, [&](size_t lo, size_t hi) {
    for (size_t job = lo; job < hi; ++job) {
      const int img = static_cast<int>(job) / out_c;
      const int oc = static_cast<int>(job) % out_c;
      const int g = oc / out_cg;
      float* dst = y.chan(img, oc);
      const float b = bias.empty() ? 0.f : bias[oc];
      for (int oy = 0; oy < oh; ++oy) {
        const int iy0 = oy * s - p;
        for (int ox = 0; ox < ow; ++ox) {
          const int ix0 = ox * s - p;
          float acc = b;
          for (int icg = 0; icg < in_cg; ++icg) {
            const float* src = x.chan(img, g * in_cg + icg);
            const float* ker =
                weight.data.data() + (static_cast<size_t>(oc) * in_cg + icg) * k * k;
            for (int ky = 0; ky < k; ++ky) {
              const int iy = iy0 + ky;
              if (iy < 0 || iy >= x.h) continue;
              const float* row = src + static_cast<size_t>(iy) * x.w;
              const float* krow = ker + static_cast<size_t>(ky) * k;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ix0 + kx;
                if (ix < 0 || ix >= x.w) continue;
                acc += krow[kx] * row[ix];
              }
            }
          }
          dst[static_cast<size_t>(oy) * ow + ox] = acc;
        }
      }
    }
  });
  return y;
}

/// x is [rows, in, 1, 1]; weight [out, in, 1, 1]; returns [rows, out, 1, 1].
inline Tensor linear(const Tensor& x, const Tensor& weight, const std::vector<float>& bias) {
  if (x.h != 1 || x.w != 1 || weight.h != 1 || weight.w != 1)
    throw ShapeError("linear expects 2-d operands stored as [rows, cols, 1, 1]");
  if (weight.c != x.c)
    throw ShapeError(strfmt("linear weight expects %d inputs, got %d", weight.c, x.c));
  const int out = weight.n;
  if (!bias.empty() && static_cast<int>(bias.size()) != out)
    throw ShapeError(strfmt("linear bias has %zu entries for %d outputs", bias.size(), out));
  const int in = x.c;
  Tensor y(x.n, out, 1, 1);
  parallel_for(static_cast<size_t>(x.n), [&](size_t lo, size_t hi) {
    for (size_t row = lo; row < hi; ++row) {
      const float* src = x.data.data() + row * in;
      float* dst = y.data.data() + row * out;
      for (int o = 0; o < out; ++o) {
        const float* wrow = weight.data.data() + static_cast<size_t>(o) * in;
        float acc = bias.empty() ? 0.f : bias[o];
        for (int i = 0; i < in; ++i) acc += wrow[i] * src[i];
        dst[o] = acc;
      }
    }
  });
  return y;
}

/// Inference-mode normalization with running statistics.
inline Tensor batchnorm2d(const Tensor& x, const BatchNormParams& p) {
  p.validate();
  if (p.channels() != x.c)
    throw ShapeError(strfmt("batchnorm has %d channels, input has %d", p.channels(), x.c));
  Tensor y(x.n, x.c, x.h, x.w);
  std::vector<float> scale(x.c), shift(x.c);
  for (int j = 0; j < x.c; ++j) {
    scale[j] = p.gamma[j] / std::sqrt(p.var[j] + p.eps);
    shift[j] = p.beta[j] - p.mean[j] * scale[j];
  }
  const size_t hw = x.plane();
  parallel_for(static_cast<size_t>(x.n) * x.c, [&](size_t lo, size_t hi) {
    for (size_t job = lo; job < hi; ++job) {
      const int j = static_cast<int>(job % x.c);
      const float* src = x.data.data() + job * hw;
      float* dst = y.data.data() + job * hw;
      const float a = scale[j], b = shift[j];
      for (size_t i = 0; i < hw; ++i) dst[i] = a * src[i] + b;
    }
  });
  return y;
}

inline Tensor silu(const Tensor& x) {
  Tensor y(x.n, x.c, x.h, x.w);
  for (size_t i = 0; i < x.size(); ++i) y.data[i] = siluf32(x.data[i]);
  return y;
}

inline Tensor gelu(const Tensor& x) {
  Tensor y(x.n, x.c, x.h, x.w);
  for (size_t i = 0; i < x.size(); ++i) y.data[i] = geluf32(x.data[i]);
  return y;
}

/// Copy channels [start, start+count) into a new tensor.
inline Tensor slice_channels(const Tensor& x, int start, int count) {
  if (start < 0 || count < 1 || start + count > x.c)
    throw ShapeError(strfmt("channel slice [%d, %d) outside 0..%d", start, start + count, x.c));
  Tensor part(x.n, count, x.h, x.w);
  const size_t bytes = static_cast<size_t>(count) * x.plane() * sizeof(float);
  for (int img = 0; img < x.n; ++img) std::memcpy(part.chan(img, 0), x.chan(img, start), bytes);
  return part;
}

/// Split along channels into parts of the given sizes (zero sizes allowed and
/// skipped in the output). Sizes must sum to x.c.
inline std::vector<Tensor> split_channels(const Tensor& x, const std::vector<int>& sizes) {
  int total = 0;
  for (int s : sizes) {
    if (s < 0) throw ShapeError(strfmt("split size %d is negative", s));
    total += s;
  }
  if (total != x.c)
    throw ShapeError(strfmt("split sizes sum to %d but input has %d channels", total, x.c));
  std::vector<Tensor> parts;
  int off = 0;
  for (int s : sizes) {
    if (s > 0) parts.push_back(slice_channels(x, off, s));
    off += s;
  }
  return parts;
}

inline Tensor concat_channels(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  int total_c = 0;
  for (const Tensor& p : parts) {
    if (p.n != parts[0].n || p.h != parts[0].h || p.w != parts[0].w)
      throw ShapeError(strfmt("concat operand %s disagrees with %s", p.shape_str().c_str(),
                              parts[0].shape_str().c_str()));
    total_c += p.c;
  }
  Tensor y(parts[0].n, total_c, parts[0].h, parts[0].w);
  const size_t hw = y.plane();
  for (int img = 0; img < y.n; ++img) {
    int off = 0;
    for (const Tensor& p : parts) {
      std::memcpy(y.chan(img, off), p.chan(img, 0), static_cast<size_t>(p.c) * hw * sizeof(float));
      off += p.c;
    }
  }
  return y;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw ShapeError(strfmt("add of %s and %s", a.shape_str().c_str(), b.shape_str().c_str()));
  Tensor y(a.n, a.c, a.h, a.w);
  for (size_t i = 0; i < a.size(); ++i) y.data[i] = a.data[i] + b.data[i];
  return y;
}

inline Tensor global_avg_pool(const Tensor& x) {
  Tensor y(x.n, x.c, 1, 1);
  const size_t hw = x.plane();
  const float inv = 1.f / static_cast<float>(hw);
  for (int img = 0; img < x.n; ++img)
    for (int j = 0; j < x.c; ++j) {
      const float* src = x.chan(img, j);
      float acc = 0.f;
      for (size_t i = 0; i < hw; ++i) acc += src[i];
      y.at(img, j, 0, 0) = acc * inv;
    }
  return y;
}

// ---------------------------------------------------------------------------
// Weight-carrying layer bundles shared by the network modules.
// ---------------------------------------------------------------------------

struct LinearLayer {
  Tensor weight;             // [out, in, 1, 1]
  std::vector<float> bias;   // empty = no bias

  int in() const { return weight.c; }
  int out() const { return weight.n; }

  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

/// Convolution with optional bias and optional trailing BN. Fusion folds the
/// BN into (weight, bias) and clears it.
struct ConvBn {
  ConvSpec spec;
  Tensor weight;             // [out_c, in_c/groups, k, k]
  std::vector<float> bias;
  std::optional<BatchNormParams> bn;

  int out_channels() const { return weight.n; }

  Tensor operator()(const Tensor& x) const {
    Tensor y = conv2d(x, weight, bias, spec);
    return bn ? batchnorm2d(y, *bn) : y;
  }
};

}  // namespace mm
