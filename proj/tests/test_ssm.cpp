#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstring>

#include "mobilemamba/mobilemamba.hpp"

using namespace mm;

TEST_CASE("zoh discretization matches the closed form") {
  LtiSsm p;
  p.a = -1.f;
  p.b = 1.f;
  p.delta = std::log(2.f);
  auto [a_bar, b_bar] = discretize_zoh(p);
  REQUIRE(a_bar == Catch::Approx(0.5f).margin(1e-6));
  REQUIRE(b_bar == Catch::Approx(0.5f).margin(1e-6));

  LtiSsm q;
  q.a = -2.f;
  q.b = 3.f;
  q.delta = 1.f;
  auto [a2, b2] = discretize_zoh(q);
  REQUIRE(a2 == Catch::Approx(std::exp(-2.f)).margin(1e-6));
  REQUIRE(b2 == Catch::Approx((std::exp(-2.f) - 1.f) / -2.f * 3.f).margin(1e-6));

  LtiSsm bad;
  bad.delta = 0.f;
  REQUIRE_THROWS_AS(discretize_zoh(bad), ConfigError);
}

TEST_CASE("discretization is continuous across the series branch") {
  // Near |delta * a| = tau the exact expression hands over to a second-order
  // series; both must agree with a double-precision evaluation.
  for (float scale : {0.25f, 0.5f, 0.9f, 1.f, 1.1f, 2.f, 8.f}) {
    LtiSsm p;
    p.a = -1.f;
    p.b = 1.7f;
    p.delta = kTaylorTau * scale;
    auto [a_bar, b_bar] = discretize_zoh(p);
    const double z = static_cast<double>(p.delta) * p.a;
    const double want_b = std::expm1(z) / p.a * p.b;
    REQUIRE(static_cast<double>(b_bar) == Catch::Approx(want_b).margin(1e-9));
    REQUIRE(static_cast<double>(a_bar) == Catch::Approx(std::exp(z)).margin(1e-9));
  }
}

TEST_CASE("a geometric kernel falls out of the rational spectrum") {
  LtiSsm p;
  p.a = -1.f;
  p.b = 1.f;
  p.c_out = 2.f;
  p.delta = std::log(2.f);
  std::vector<float> k = ssm_kernel(p, 3);
  REQUIRE(k[0] == Catch::Approx(1.f).margin(1e-6));
  REQUIRE(k[1] == Catch::Approx(0.5f).margin(1e-6));
  REQUIRE(k[2] == Catch::Approx(0.25f).margin(1e-6));
}

TEST_CASE("a unit pole accumulates a running sum") {
  const int L = 8;
  std::vector<float> ones(L, 1.f);
  std::vector<float> y = scan_recurrent(ones, ones, ones, ones);
  for (int t = 0; t < L; ++t) REQUIRE(y[t] == static_cast<float>(t + 1));
}

TEST_CASE("recurrent and convolutional scans agree, and a perturbed pole does not") {
  Rng rng(21);
  for (int cs = 0; cs < 50; ++cs) {
    const int L = 1 + static_cast<int>(rng.next_u32() % 64);
    LtiSsm p = lti_from_a_log(rng.uniform(-3.f, 0.5f), rng.uniform(-2.f, 2.f),
                              rng.uniform(-2.f, 2.f), rng.uniform(0.05f, 1.5f));
    std::vector<float> x(L);
    for (float& v : x) v = rng.uniform(-1.f, 1.f);
    auto [a_bar, b_bar] = discretize_zoh(p);
    std::vector<float> y_rec = scan_recurrent(std::vector<float>(L, a_bar),
                                              std::vector<float>(L, b_bar),
                                              std::vector<float>(L, p.c_out), x);
    std::vector<float> y_conv = scan_convolutional(p, x);
    for (int t = 0; t < L; ++t)
      REQUIRE(y_conv[t] == Catch::Approx(y_rec[t]).margin(1e-4 * (std::fabs(y_rec[t]) + 1.f)));
  }

  // Negative control: a 1% pole error must be caught by the same tolerance.
  LtiSsm p;
  p.a = -0.1f;
  p.b = 1.f;
  p.c_out = 1.f;
  p.delta = 1.f;
  const int L = 32;
  std::vector<float> ones(L, 1.f);
  auto [a_bar, b_bar] = discretize_zoh(p);
  std::vector<float> good = scan_recurrent(std::vector<float>(L, a_bar),
                                           std::vector<float>(L, b_bar),
                                           std::vector<float>(L, 1.f), ones);
  std::vector<float> tampered = scan_recurrent(std::vector<float>(L, a_bar * 1.01f),
                                               std::vector<float>(L, b_bar),
                                               std::vector<float>(L, 1.f), ones);
  float rel = 0.f, scale = 0.f;
  for (int t = 0; t < L; ++t) {
    rel = std::max(rel, std::fabs(good[t] - tampered[t]));
    scale = std::max(scale, std::fabs(good[t]));
  }
  REQUIRE(rel / scale > 1e-4f);
}

TEST_CASE("scan sequences must share one length") {
  std::vector<float> a(4, 0.5f), b(3, 1.f), c(4, 1.f), x(4, 1.f);
  REQUIRE_THROWS_AS(scan_recurrent(a, b, c, x), ShapeError);
}

namespace {
SelectiveSsmParams tiny_params(int c_g, int d_state, bool euler, uint32_t seed) {
  Rng rng(seed);
  return mm::testing::random_mamba(c_g, d_state, euler, rng);
}

Tensor reverse_tokens(const Tensor& t) {
  Tensor r(t.n, t.c, 1, 1);
  for (int i = 0; i < t.n; ++i)
    std::memcpy(r.chan(t.n - 1 - i, 0), t.chan(i, 0), static_cast<size_t>(t.c) * sizeof(float));
  return r;
}
}  // namespace

TEST_CASE("selective scan matches the step-by-step oracle") {
  Rng rng(22);
  for (int cs = 0; cs < 12; ++cs) {
    const int c_g = 1 + cs % 4;
    const int d_state = 1 + cs % 3;
    const bool euler = cs % 4 == 2;
    SelectiveSsmParams p = tiny_params(c_g, d_state, euler, 100 + cs);
    Tensor x(1 + static_cast<int>(rng.next_u32() % 40), p.inner(), 1, 1);
    for (float& v : x.data) v = rng.normal();
    for (ScanDirection dir : {ScanDirection::Forward, ScanDirection::Backward}) {
      const Tensor got = selective_scan(x, p, dir);
      const Tensor want = naive_selective_scan(x, p, dir);
      REQUIRE(got.same_shape(want));
      for (size_t i = 0; i < got.size(); ++i)
        REQUIRE(got.data[i] == Catch::Approx(want.data[i]).margin(1e-5));
    }
  }
}

TEST_CASE("backward scanning equals forward scanning on reversed tokens") {
  Rng rng(23);
  SelectiveSsmParams p = tiny_params(3, 2, false, 200);
  Tensor x(11, p.inner(), 1, 1);
  for (float& v : x.data) v = rng.normal();
  SelectiveSsmParams q = p;
  q.fwd = p.bwd;  // run the backward head forward over reversed input
  const Tensor direct = selective_scan(x, p, ScanDirection::Backward);
  const Tensor flipped = reverse_tokens(selective_scan(reverse_tokens(x), q,
                                                       ScanDirection::Forward));
  REQUIRE(std::memcmp(direct.data.data(), flipped.data.data(),
                      direct.size() * sizeof(float)) == 0);
}

TEST_CASE("zero readout reduces the scan to its skip path") {
  SelectiveSsmParams p = tiny_params(2, 2, false, 300);
  p.fwd.c_proj.weight.data.assign(p.fwd.c_proj.weight.size(), 0.f);
  Tensor x(9, p.inner(), 1, 1);
  Rng rng(24);
  for (float& v : x.data) v = rng.normal();
  const Tensor y = selective_scan(x, p, ScanDirection::Forward);
  for (int t = 0; t < x.n; ++t)
    for (int i = 0; i < p.inner(); ++i)
      REQUIRE(y.chan(t, 0)[i] == p.fwd.d_skip[i] * x.chan(t, 0)[i]);
}

TEST_CASE("disabling the skip term removes the feedthrough") {
  SelectiveSsmParams p = tiny_params(2, 1, false, 301);
  p.fwd.c_proj.weight.data.assign(p.fwd.c_proj.weight.size(), 0.f);
  p.use_d_skip = false;
  Tensor x(5, p.inner(), 1, 1);
  Rng rng(25);
  for (float& v : x.data) v = rng.normal();
  const Tensor y = selective_scan(x, p, ScanDirection::Forward);
  for (float v : y.data) REQUIRE(v == 0.f);
}

TEST_CASE("the euler coupling is a live code path") {
  SelectiveSsmParams zoh = tiny_params(2, 1, false, 302);
  SelectiveSsmParams eul = zoh;
  eul.euler_b = true;
  Tensor x(7, zoh.inner(), 1, 1);
  Rng rng(26);
  for (float& v : x.data) v = rng.normal();
  const Tensor a = selective_scan(x, zoh, ScanDirection::Forward);
  const Tensor b = selective_scan(x, eul, ScanDirection::Forward);
  float diff = 0.f;
  for (size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::fabs(a.data[i] - b.data[i]));
  REQUIRE(diff > 0.f);
}

TEST_CASE("the mixer is deterministic and shape preserving") {
  Rng rng(27);
  SelectiveSsmParams p = tiny_params(5, 1, false, 303);
  Tensor x(2, 5, 4, 6);
  for (float& v : x.data) v = rng.normal();
  const Tensor y1 = mamba_mixer(x, p);
  const Tensor y2 = mamba_mixer(x, p);
  REQUIRE(y1.same_shape(x));
  REQUIRE(std::memcmp(y1.data.data(), y2.data.data(), y1.size() * sizeof(float)) == 0);
  for (float v : y1.data) REQUIRE(std::isfinite(v));
}

TEST_CASE("zeroing the mixer output projection silences it") {
  SelectiveSsmParams p = tiny_params(3, 1, false, 304);
  p.out_proj.weight.data.assign(p.out_proj.weight.size(), 0.f);
  p.out_proj.bias.assign(p.out_proj.bias.size(), 0.f);
  Tensor x(1, 3, 3, 3);
  Rng rng(28);
  for (float& v : x.data) v = rng.normal();
  const Tensor y = mamba_mixer(x, p);
  for (float v : y.data) REQUIRE(v == 0.f);
}
