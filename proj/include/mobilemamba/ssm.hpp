#pragma once

#include <utility>

#include "mobilemamba/tensor.hpp"

namespace mm {

// ---------------------------------------------------------------------------
// State-space scan machinery. A scalar LTI system (state size 1) has the
// zero-order-hold discretization
//   a_bar = exp(delta*a),  b_bar = (exp(delta*a) - 1)/a * b,
// with a Taylor branch near delta*a = 0. The selective variant makes delta,
// B, C functions of the token and runs the recurrence per inner channel.
// ---------------------------------------------------------------------------

/// Switch point to the Taylor branch of b_bar on |delta*a|.
constexpr float kTaylorTau = 1e-4f;

struct LtiSsm {
  float a = -1.f;     // continuous-time state coefficient, < 0 for stability
  float b = 1.f;      // input coupling
  float c_out = 1.f;  // readout
  float delta = 1.f;  // step size, > 0
};

/// Stability-safe construction: a = -exp(a_log) is negative by design.
inline LtiSsm lti_from_a_log(float a_log, float b, float c_out, float delta) {
  return LtiSsm{-std::exp(a_log), b, c_out, delta};
}

inline std::pair<float, float> discretize_zoh(const LtiSsm& p) {
  if (!(p.delta > 0.f)) throw ConfigError(strfmt("step size must be positive, got %g", p.delta));
  const float z = p.delta * p.a;
  const float a_bar = std::exp(z);
  float b_bar;
  if (std::fabs(z) > kTaylorTau) {
    // expm1 keeps the small-|z| side of the branch free of cancellation, so
    // both branches agree at the switch point.
    b_bar = std::expm1(z) / p.a * p.b;
  } else {
    b_bar = p.delta * p.b * (1.f + 0.5f * z);
  }
  return {a_bar, b_bar};
}

/// y_t = c_t * h_t with h_t = a_bar_t * h_{t-1} + b_bar_t * x_t.
inline std::vector<float> scan_recurrent(const std::vector<float>& a_bar,
                                         const std::vector<float>& b_bar,
                                         const std::vector<float>& c,
                                         const std::vector<float>& x, float h0 = 0.f) {
  const size_t L = x.size();
  if (a_bar.size() != L || b_bar.size() != L || c.size() != L)
    throw ShapeError(strfmt("scan sequences disagree: %zu/%zu/%zu/%zu", a_bar.size(),
                            b_bar.size(), c.size(), L));
  std::vector<float> y(L);
  float h = h0;
  for (size_t t = 0; t < L; ++t) {
    h = a_bar[t] * h + b_bar[t] * x[t];
    y[t] = c[t] * h;
  }
  return y;
}

/// Global-convolution view of a constant-parameter scan:
/// K[t] = c * a_bar^t * b_bar.
inline std::vector<float> ssm_kernel(const LtiSsm& p, int L) {
  if (L < 1) throw ConfigError(strfmt("kernel length must be >= 1, got %d", L));
  auto [a_bar, b_bar] = discretize_zoh(p);
  std::vector<float> k(L);
  float tap = p.c_out * b_bar;
  for (int t = 0; t < L; ++t) {
    k[t] = tap;
    tap *= a_bar;
  }
  return k;
}

/// Causal convolution of x with ssm_kernel(p, len(x)); equals scan_recurrent
/// with h0 = 0 when the parameters are constant.
inline std::vector<float> scan_convolutional(const LtiSsm& p, const std::vector<float>& x) {
  const size_t L = x.size();
  if (L == 0) return {};
  std::vector<float> k = ssm_kernel(p, static_cast<int>(L));
  std::vector<float> y(L);
  for (size_t t = 0; t < L; ++t) {
    float acc = 0.f;
    for (size_t s = 0; s <= t; ++s) acc += k[s] * x[t - s];
    y[t] = acc;
  }
  return y;
}

// ---------------------------------------------------------------------------
// Selective scan.
// ---------------------------------------------------------------------------

enum class ScanDirection { Forward, Backward };

/// Per-direction parameters of the selective scan.
struct ScanHead {
  std::vector<float> a_log;  // inner * d_state
  LinearLayer dt_proj;       // inner -> inner, bias
  LinearLayer b_proj;        // inner -> d_state, no bias
  LinearLayer c_proj;        // inner -> d_state, no bias
  std::vector<float> d_skip; // inner
};

struct SelectiveSsmParams {
  int c_g = 0;
  int d_state = 1;
  int expand = 2;
  bool euler_b = false;    // b_bar = delta*b instead of exact ZOH
  bool use_d_skip = true;
  LinearLayer in_proj;     // c_g -> 2*expand*c_g, bias
  Tensor conv1d_weight;    // [inner, 1, 1, k] taps along w
  std::vector<float> conv1d_bias;
  LinearLayer out_proj;    // inner -> c_g, bias
  ScanHead fwd, bwd;

  int inner() const { return expand * c_g; }
};

namespace detail {

/// Y[o][t] = sum_i W[o][i] * X[i][t] + b[o] over channel-major planes.
inline void matmul_planes(const float* w, const float* bias, const float* x, int out, int in,
                          size_t len, float* y) {
  parallel_for(static_cast<size_t>(out), [&](size_t lo, size_t hi) {
    for (size_t o = lo; o < hi; ++o) {
      float* dst = y + o * len;
      const float b = bias ? bias[o] : 0.f;
      for (size_t t = 0; t < len; ++t) dst[t] = b;
      const float* wrow = w + o * in;
      for (int i = 0; i < in; ++i) {
        const float wv = wrow[i];
        const float* src = x + static_cast<size_t>(i) * len;
        for (size_t t = 0; t < len; ++t) dst[t] += wv * src[t];
      }
    }
  });
}

/// Depthwise 1-D conv over token index with 'same' zero padding (non-causal).
inline void conv1d_planes(const float* x, int channels, size_t len, const Tensor& weight,
                          const std::vector<float>& bias, float* y) {
  const int k = weight.w;
  const int pad = k / 2;
  parallel_for(static_cast<size_t>(channels), [&](size_t lo, size_t hi) {
    for (size_t ch = lo; ch < hi; ++ch) {
      const float* src = x + ch * len;
      float* dst = y + ch * len;
      const float* taps = weight.data.data() + ch * k;
      const float b = bias.empty() ? 0.f : bias[ch];
      for (size_t t = 0; t < len; ++t) {
        float acc = b;
        for (int j = 0; j < k; ++j) {
          const long s = static_cast<long>(t) + j - pad;
          if (s >= 0 && s < static_cast<long>(len)) acc += taps[j] * src[s];
        }
        dst[t] = acc;
      }
    }
  });
}

/// Recurrence over channel-major planes. dtp is the pre-softplus delta,
/// bp/cp are [d_state][len] planes; out is written (not accumulated).
inline void scan_core(const float* x, const float* dtp, const float* bp, const float* cp,
                      int inner, int d_state, size_t len, const ScanHead& head, bool backward,
                      bool euler_b, bool use_d_skip, float* out) {
  std::vector<float> a_neg(head.a_log.size());
  for (size_t i = 0; i < a_neg.size(); ++i) a_neg[i] = -std::exp(head.a_log[i]);
  parallel_for(static_cast<size_t>(inner), [&](size_t lo, size_t hi) {
    std::vector<float> h(static_cast<size_t>(d_state));
    for (size_t i = lo; i < hi; ++i) {
      const float* xi = x + i * len;
      const float* dti = dtp + i * len;
      float* yi = out + i * len;
      const float skip = use_d_skip ? head.d_skip[i] : 0.f;
      std::fill(h.begin(), h.end(), 0.f);
      for (size_t step = 0; step < len; ++step) {
        const size_t t = backward ? len - 1 - step : step;
        const float dt = softplusf32(dti[t]);
        const float xv = xi[t];
        float acc = skip * xv;
        for (int d = 0; d < d_state; ++d) {
          const float a = a_neg[i * d_state + d];
          const float z = dt * a;
          const float a_bar = std::exp(z);
          float b_bar;
          if (euler_b) {
            b_bar = dt * bp[d * len + t];
          } else if (std::fabs(z) > kTaylorTau) {
            b_bar = std::expm1(z) / a * bp[d * len + t];
          } else {
            b_bar = dt * bp[d * len + t] * (1.f + 0.5f * z);
          }
          h[d] = a_bar * h[d] + b_bar * xv;
          acc += cp[d * len + t] * h[d];
        }
        yi[t] = acc;
      }
    }
  });
}

/// Full one-direction selective scan on [inner][len] planes.
inline void selective_scan_planes(const float* x, int inner, int d_state, size_t len,
                                  const SelectiveSsmParams& p, const ScanHead& head,
                                  bool backward, float* out) {
  std::vector<float> dtp(static_cast<size_t>(inner) * len);
  std::vector<float> bp(static_cast<size_t>(d_state) * len);
  std::vector<float> cp(static_cast<size_t>(d_state) * len);
  matmul_planes(head.dt_proj.weight.data.data(), head.dt_proj.bias.data(), x, inner, inner, len,
                dtp.data());
  matmul_planes(head.b_proj.weight.data.data(), nullptr, x, d_state, inner, len, bp.data());
  matmul_planes(head.c_proj.weight.data.data(), nullptr, x, d_state, inner, len, cp.data());
  scan_core(x, dtp.data(), bp.data(), cp.data(), inner, d_state, len, head, backward, p.euler_b,
            p.use_d_skip, out);
}

}  // namespace detail

/// Selective scan over a token matrix [L, inner, 1, 1]. Backward reverses the
/// token order, scans, and reverses back.
inline Tensor selective_scan(const Tensor& x_tokens, const SelectiveSsmParams& p,
                             ScanDirection dir) {
  if (x_tokens.h != 1 || x_tokens.w != 1)
    throw ShapeError("selective_scan expects tokens stored as [L, inner, 1, 1]");
  const int inner = x_tokens.c;
  const size_t L = static_cast<size_t>(x_tokens.n);
  const ScanHead& head = dir == ScanDirection::Forward ? p.fwd : p.bwd;
  if (head.dt_proj.in() != inner)
    throw ShapeError(strfmt("scan head built for %d channels, tokens have %d",
                            head.dt_proj.in(), inner));
  // Transpose to channel-major planes, run, transpose back.
  std::vector<float> planes(static_cast<size_t>(inner) * L);
  for (size_t t = 0; t < L; ++t)
    for (int i = 0; i < inner; ++i) planes[static_cast<size_t>(i) * L + t] = x_tokens.data[t * inner + i];
  std::vector<float> out(planes.size());
  detail::selective_scan_planes(planes.data(), inner, p.d_state, L, p, head,
                                dir == ScanDirection::Backward, out.data());
  Tensor y(x_tokens.n, inner, 1, 1);
  for (size_t t = 0; t < L; ++t)
    for (int i = 0; i < inner; ++i) y.data[t * inner + i] = out[static_cast<size_t>(i) * L + t];
  return y;
}

/// Bidirectional gated mixer over the row-major flattened spatial sequence:
/// in_proj -> (main | gate); main -> depthwise conv1d -> SiLU -> forward +
/// backward selective scans; output = out_proj(scan_sum * SiLU(gate)).
inline Tensor mamba_mixer(const Tensor& x, const SelectiveSsmParams& p) {
  if (x.c != p.c_g)
    throw ShapeError(strfmt("mixer built for %d channels, input has %d", p.c_g, x.c));
  const int inner = p.inner();
  const size_t L = x.plane();
  Tensor y(x.n, x.c, x.h, x.w);
  std::vector<float> u(static_cast<size_t>(2 * inner) * L);
  std::vector<float> conv(static_cast<size_t>(inner) * L);
  std::vector<float> scan_f(conv.size()), scan_b(conv.size());
  for (int img = 0; img < x.n; ++img) {
    const float* src = x.chan(img, 0);  // already [c_g][L] channel-major
    detail::matmul_planes(p.in_proj.weight.data.data(),
                          p.in_proj.bias.empty() ? nullptr : p.in_proj.bias.data(), src,
                          2 * inner, p.c_g, L, u.data());
    float* main = u.data();
    float* gate = u.data() + static_cast<size_t>(inner) * L;
    detail::conv1d_planes(main, inner, L, p.conv1d_weight, p.conv1d_bias, conv.data());
    for (size_t i = 0; i < conv.size(); ++i) conv[i] = siluf32(conv[i]);
    detail::selective_scan_planes(conv.data(), inner, p.d_state, L, p, p.fwd, false,
                                  scan_f.data());
    detail::selective_scan_planes(conv.data(), inner, p.d_state, L, p, p.bwd, true,
                                  scan_b.data());
    for (size_t i = 0; i < scan_f.size(); ++i)
      scan_f[i] = (scan_f[i] + scan_b[i]) * siluf32(gate[i]);
    detail::matmul_planes(p.out_proj.weight.data.data(),
                          p.out_proj.bias.empty() ? nullptr : p.out_proj.bias.data(),
                          scan_f.data(), p.c_g, inner, L, y.chan(img, 0));
  }
  return y;
}

}  // namespace mm
