#include <catch2/catch_amalgamated.hpp>
#include <cstring>

#include "mobilemamba/mobilemamba.hpp"

using namespace mm;

TEST_CASE("constant input concentrates in the low band") {
  Tensor x(1, 1, 2, 2);
  x.data.assign(4, 3.f);
  Tensor y = wt2d(x);
  REQUIRE(y.c == 4);
  REQUIRE(y.h == 1);
  REQUIRE(y.w == 1);
  REQUIRE(y.data[0] == 6.f);  // (3+3+3+3)/2
  REQUIRE(y.data[1] == 0.f);
  REQUIRE(y.data[2] == 0.f);
  REQUIRE(y.data[3] == 0.f);
}

TEST_CASE("oriented stripes land in their bands") {
  Tensor v(1, 1, 2, 2);
  v.data = {1, -1, 1, -1};  // vertical edges -> horizontal-detail band
  Tensor yv = wt2d(v);
  REQUIRE(yv.data[0] == 0.f);
  REQUIRE(yv.data[1] == 2.f);
  REQUIRE(yv.data[2] == 0.f);
  REQUIRE(yv.data[3] == 0.f);

  Tensor h(1, 1, 2, 2);
  h.data = {1, 1, -1, -1};
  Tensor yh = wt2d(h);
  REQUIRE(yh.data[1] == 0.f);
  REQUIRE(yh.data[2] == 2.f);
  REQUIRE(yh.data[3] == 0.f);

  Tensor d(1, 1, 2, 2);
  d.data = {1, -1, -1, 1};
  Tensor yd = wt2d(d);
  REQUIRE(yd.data[1] == 0.f);
  REQUIRE(yd.data[2] == 0.f);
  REQUIRE(yd.data[3] == 2.f);
}

TEST_CASE("odd extents are implicitly zero padded on the trailing edge") {
  Tensor x(1, 1, 3, 3);
  x.data.assign(9, 1.f);
  Tensor y = wt2d(x);
  REQUIRE(y.h == 2);
  REQUIRE(y.w == 2);
  const float* ll = y.chan(0, 0);
  REQUIRE(ll[0] == 2.f);
  REQUIRE(ll[1] == 1.f);    // right column padded
  REQUIRE(ll[2] == 1.f);    // bottom row padded
  REQUIRE(ll[3] == 0.5f);   // corner: single live sample
  REQUIRE(y.chan(0, 1)[1] == 1.f);
  REQUIRE(y.chan(0, 2)[2] == 1.f);
  REQUIRE(y.chan(0, 3)[3] == 0.5f);
}

TEST_CASE("a single pixel survives analysis and synthesis") {
  Tensor x(1, 1, 1, 1);
  x.data = {5.f};
  Tensor y = wt2d(x);
  for (int b = 0; b < 4; ++b) REQUIRE(y.data[b] == 2.5f);
  Tensor back = iwt2d(y, {}, 1, 1);
  REQUIRE(back.h == 1);
  REQUIRE(back.data[0] == 5.f);
}

TEST_CASE("band blocks are ordered low to high with channels contiguous") {
  Tensor x(1, 2, 2, 2);
  float* c0 = x.chan(0, 0);
  c0[0] = c0[1] = c0[2] = c0[3] = 2.f;
  float* c1 = x.chan(0, 1);
  c1[0] = 1.f;
  c1[1] = -1.f;
  c1[2] = 1.f;
  c1[3] = -1.f;
  Tensor y = wt2d(x);
  REQUIRE(y.c == 8);
  REQUIRE(y.chan(0, 0)[0] == 4.f);  // low band of channel 0
  REQUIRE(y.chan(0, 1)[0] == 0.f);  // low band of channel 1
  REQUIRE(y.chan(0, 3)[0] == 2.f);  // horizontal-detail band of channel 1
  REQUIRE(y.chan(0, 2)[0] == 0.f);
}

TEST_CASE("even extents conserve energy exactly") {
  Rng rng(11);
  Tensor x(2, 3, 8, 6);
  for (float& v : x.data) v = rng.normal();
  Tensor y = wt2d(x);
  double ex = 0, ey = 0;
  for (float v : x.data) ex += static_cast<double>(v) * v;
  for (float v : y.data) ey += static_cast<double>(v) * v;
  REQUIRE(ey == Catch::Approx(ex).epsilon(1e-6));
  Tensor back = iwt2d(y);
  REQUIRE(back.same_shape(x));
  for (size_t i = 0; i < x.size(); ++i)
    REQUIRE(back.data[i] == Catch::Approx(x.data[i]).margin(1e-6));
}

TEST_CASE("reconstruction crops to the requested odd extent") {
  Rng rng(12);
  Tensor x(1, 2, 5, 7);
  for (float& v : x.data) v = rng.normal();
  Tensor back = iwt2d(wt2d(x), {}, 5, 7);
  REQUIRE(back.same_shape(x));
  for (size_t i = 0; i < x.size(); ++i)
    REQUIRE(back.data[i] == Catch::Approx(x.data[i]).margin(1e-6));
  REQUIRE_THROWS_AS(iwt2d(wt2d(x), {}, 4, 7), ShapeError);
  REQUIRE_THROWS_AS(iwt2d(wt2d(x), {}, 5, 9), ShapeError);
}

TEST_CASE("coefficient channel count must be a multiple of four") {
  Tensor bad(1, 3, 2, 2);
  REQUIRE_THROWS_AS(iwt2d(bad), ShapeError);
}

TEST_CASE("zeroed coefficient conv yields a zero enhancement branch") {
  Rng rng(13);
  Tensor x(1, 3, 5, 5);
  for (float& v : x.data) v = rng.normal();
  Tensor w(12, 1, 3, 3);
  w.data.assign(w.size(), 0.f);
  BatchNormParams bn(12);
  Tensor y = wte_branch(x, w, bn);
  REQUIRE(y.same_shape(x));
  for (float v : y.data) REQUIRE(v == 0.f);
}

TEST_CASE("identity-passing coefficient conv reconstructs the input") {
  // Depthwise 3x3 with a centered one and identity normalization leaves the
  // coefficients untouched, so the branch reduces to analysis + synthesis.
  Rng rng(14);
  Tensor x(1, 2, 6, 4);
  for (float& v : x.data) v = rng.normal();
  Tensor w(8, 1, 3, 3);
  w.data.assign(w.size(), 0.f);
  for (int ch = 0; ch < 8; ++ch) w.data[static_cast<size_t>(ch) * 9 + 4] = 1.f;
  Tensor y = wte_branch(x, w, BatchNormParams(8));
  for (size_t i = 0; i < x.size(); ++i)
    REQUIRE(y.data[i] == Catch::Approx(x.data[i]).margin(1e-6));
}
