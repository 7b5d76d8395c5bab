#include <catch2/catch_amalgamated.hpp>
#include <cstring>

#include "mobilemamba/mobilemamba.hpp"

using namespace mm;

namespace {
MrffiConfig frac(float xi, float mu, int n_splits = 1) {
  MrffiConfig cfg;
  cfg.xi = xi;
  cfg.mu = mu;
  cfg.n_splits = n_splits;
  return cfg;
}
}  // namespace

TEST_CASE("channel partition follows the floor rules") {
  const Partition a = partition(448, frac(0.6f, 0.3f));
  REQUIRE(a.c_g == 268);
  REQUIRE(a.c_l == 134);
  REQUIRE(a.c_id == 46);

  const Partition b = partition(144, frac(0.8f, 0.2f));
  REQUIRE(b.c_g == 115);
  REQUIRE(b.c_l == 28);
  REQUIRE(b.c_id == 1);

  const Partition c = partition(100, frac(0.5f, 0.25f, 3));
  REQUIRE(c.c_g == 50);
  REQUIRE(c.c_l == 24);  // floor(25) floored to a multiple of 3
  REQUIRE(c.c_id == 26);

  const Partition d = partition(7, frac(0.f, 0.f));
  REQUIRE(d.c_g == 0);
  REQUIRE(d.c_l == 0);
  REQUIRE(d.c_id == 7);
}

TEST_CASE("fractions outside the unit simplex are rejected") {
  REQUIRE_THROWS_AS(frac(1.2f, 0.f).validate(), ConfigError);
  REQUIRE_THROWS_AS(frac(-0.1f, 0.f).validate(), ConfigError);
  REQUIRE_THROWS_AS(frac(0.8f, 0.4f).validate(), ConfigError);
  REQUIRE_THROWS_AS(frac(0.5f, 0.2f, 0).validate(), ConfigError);
  REQUIRE_THROWS_AS(partition(0, frac(0.5f, 0.2f)), ConfigError);
}

TEST_CASE("the local branch applies one kernel size per split") {
  Mrffi m = detail::make_mrffi(6, frac(0.f, 1.f, 3));
  REQUIRE(m.part.c_l == 6);
  REQUIRE(m.mk.splits.size() == 3);
  const int want_kernel[3] = {3, 5, 7};
  for (int j = 0; j < 3; ++j) {
    REQUIRE(m.mk.splits[j].spec.kernel == want_kernel[j]);
    REQUIRE(m.mk.splits[j].spec.padding == want_kernel[j] / 2);
    REQUIRE(m.mk.splits[j].spec.groups == 2);
    REQUIRE(m.mk.splits[j].weight.n == 2);
  }

  // Centered-one kernels pass each split through; doubling one split's
  // center scales exactly its two channels.
  for (int j = 0; j < 3; ++j) {
    Tensor& w = m.mk.splits[j].weight;
    w.data.assign(w.size(), 0.f);
    const int k = w.h;
    for (int ch = 0; ch < 2; ++ch)
      w.data[(static_cast<size_t>(ch) * k + k / 2) * k + k / 2] = j == 1 ? 2.f : 1.f;
  }
  Tensor x(1, 6, 4, 4);
  Rng rng(41);
  for (float& v : x.data) v = rng.normal();
  Tensor y = mk_deconv(x, m.mk);
  REQUIRE(y.same_shape(x));
  for (int ch = 0; ch < 6; ++ch) {
    const float scale = (ch == 2 || ch == 3) ? 2.f : 1.f;
    for (size_t i = 0; i < x.plane(); ++i)
      REQUIRE(y.chan(0, ch)[i] == Catch::Approx(scale * x.chan(0, ch)[i]).margin(1e-6));
  }

  Tensor bad(1, 5, 4, 4);
  REQUIRE_THROWS_AS(mk_deconv(bad, m.mk), ShapeError);
}

TEST_CASE("degenerate fractions reduce the module to a bit-exact copy") {
  Mrffi m = detail::make_mrffi(24, frac(0.f, 0.f));
  Tensor x(2, 24, 5, 7);
  Rng rng(42);
  for (float& v : x.data) v = rng.normal();
  const Tensor y = mrffi_forward(x, m);
  REQUIRE(y.same_shape(x));
  REQUIRE(std::memcmp(y.data.data(), x.data.data(), x.size() * sizeof(float)) == 0);
}

TEST_CASE("the identity slice passes through untouched under hostile weights") {
  Rng rng(43);
  Mrffi m = detail::make_mrffi(20, frac(0.55f, 0.3f, 2));
  REQUIRE(m.part.c_g == 11);
  REQUIRE(m.part.c_l == 6);
  REQUIRE(m.part.c_id == 3);
  mm::testing::randomize_mrffi(m, rng);
  Tensor x(2, 20, 6, 5);
  for (float& v : x.data) v = rng.normal();
  const Tensor y = mrffi_forward(x, m);
  REQUIRE(y.same_shape(x));
  for (int img = 0; img < 2; ++img)
    REQUIRE(std::memcmp(y.chan(img, 17), x.chan(img, 17), 3 * x.plane() * sizeof(float)) == 0);
  // The mixed slices should actually have changed.
  bool changed = false;
  for (int img = 0; img < 2; ++img)
    changed = changed || std::memcmp(y.chan(img, 0), x.chan(img, 0),
                                     17 * x.plane() * sizeof(float)) != 0;
  REQUIRE(changed);
}

TEST_CASE("a zeroed wavelet conv is equivalent to disabling the branch") {
  Rng rng(44);
  MrffiConfig with_wt = frac(0.62f, 0.2f);
  Mrffi on = detail::make_mrffi(10, with_wt);
  mm::testing::randomize_mrffi(on, rng);
  on.wt_conv.weight.data.assign(on.wt_conv.weight.size(), 0.f);
  *on.wt_conv.bn = BatchNormParams(on.wt_conv.weight.n);

  MrffiConfig no_wt = with_wt;
  no_wt.wt_enabled = false;
  Mrffi off = detail::make_mrffi(10, no_wt);
  off.mamba = on.mamba;
  off.mk = on.mk;

  Tensor x(1, 10, 4, 4);
  for (float& v : x.data) v = rng.normal();
  const Tensor ya = mrffi_forward(x, on);
  const Tensor yb = mrffi_forward(x, off);
  for (size_t i = 0; i < ya.size(); ++i)
    REQUIRE(ya.data[i] == Catch::Approx(yb.data[i]).margin(1e-7));
}

TEST_CASE("the module rejects width mismatches") {
  Mrffi m = detail::make_mrffi(16, frac(0.5f, 0.25f));
  Tensor x(1, 12, 4, 4);
  REQUIRE_THROWS_AS(mrffi_forward(x, m), ShapeError);
}

TEST_CASE("an all-global module still adds the wavelet branch") {
  Rng rng(45);
  Mrffi m = detail::make_mrffi(6, frac(1.f, 0.f));
  REQUIRE(m.part.c_g == 6);
  mm::testing::randomize_mrffi(m, rng);
  Tensor x(1, 6, 5, 5);
  for (float& v : x.data) v = rng.normal();
  const Tensor with_wt = mrffi_forward(x, m);

  m.wt_conv.weight.data.assign(m.wt_conv.weight.size(), 0.f);
  *m.wt_conv.bn = BatchNormParams(m.wt_conv.weight.n);
  const Tensor without = mrffi_forward(x, m);
  float diff = 0.f;
  for (size_t i = 0; i < with_wt.size(); ++i)
    diff = std::max(diff, std::fabs(with_wt.data[i] - without.data[i]));
  REQUIRE(diff > 0.f);
}
