#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rubikssl/errors.hpp"
#include "rubikssl/layers.hpp"

using namespace rubikssl;

namespace {

void randomize(Tensor& t, std::mt19937& g, float scale = 1.0f) {
  std::uniform_real_distribution<float> d(-scale, scale);
  for (auto& x : t.values()) x = d(g);
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

// Checks d<r, f(x)>/dx against central differences of the scalar probe.
template <typename F>
void check_input_grad(F f, Tensor x, const Tensor& analytic, const Tensor& r, double tol) {
  const float h = 1e-2f;
  for (std::int64_t i = 0; i < x.numel(); i += std::max<std::int64_t>(1, x.numel() / 40)) {
    const float x0 = x[i];
    x[i] = x0 + h;
    const double up = dot(f(x), r);
    x[i] = x0 - h;
    const double down = dot(f(x), r);
    x[i] = x0;
    const double num = (up - down) / (2 * h);
    CHECK(std::abs(num - analytic[i]) <= tol * (1 + std::abs(num)));
  }
}

}  // namespace

TEST_CASE("conv3d forward matches direct convolution") {
  std::mt19937 g(1);
  for (auto [n, ci, co, X, Y, Z, k] : std::vector<std::array<int, 7>>{
           {1, 1, 1, 3, 3, 3, 3}, {2, 3, 4, 5, 4, 6, 3}, {1, 2, 3, 4, 4, 2, 1}, {2, 2, 2, 7, 3, 5, 5}}) {
    ParamStore ps;
    nn::Conv3d conv(ps, "c", Role::encoder, ci, co, k);
    randomize(ps.at("c.weight").value, g);
    randomize(ps.at("c.bias").value, g);
    Tensor x({n, ci, X, Y, Z});
    randomize(x, g);
    const Tensor y = conv.forward(x);
    const auto ref = oracle::conv3d(std::vector<float>(x.values().begin(), x.values().end()),
                                    std::vector<float>(ps.at("c.weight").value.values().begin(), ps.at("c.weight").value.values().end()),
                                    std::vector<float>(ps.at("c.bias").value.values().begin(), ps.at("c.bias").value.values().end()),
                                    n, ci, co, X, Y, Z, k);
    REQUIRE(y.shape() == std::vector<std::int64_t>{n, co, X, Y, Z});
    for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(ref[static_cast<std::size_t>(i)]).epsilon(1e-4));
  }
}

TEST_CASE("conv3d gradients match finite differences") {
  std::mt19937 g(2);
  ParamStore ps;
  nn::Conv3d conv(ps, "c", Role::encoder, 2, 3, 3);
  randomize(ps.at("c.weight").value, g, 0.5f);
  randomize(ps.at("c.bias").value, g);
  Tensor x({2, 2, 4, 3, 5});
  randomize(x, g);
  Tensor r({2, 3, 4, 3, 5});
  randomize(r, g);
  conv.forward(x);
  ps.zero_grad();
  const Tensor dx = conv.backward(r, true);
  check_input_grad([&](const Tensor& xx) { return conv.forward(xx); }, x, dx, r, 2e-3);

  Param& w = ps.at("c.weight");
  const Tensor gw = w.grad;
  for (std::int64_t i = 0; i < w.value.numel(); i += 7) {
    const float w0 = w.value[i];
    w.value[i] = w0 + 1e-2f;
    const double up = dot(conv.forward(x), r);
    w.value[i] = w0 - 1e-2f;
    const double down = dot(conv.forward(x), r);
    w.value[i] = w0;
    const double num = (up - down) / 2e-2;
    CHECK(std::abs(num - gw[i]) <= 2e-3 * (1 + std::abs(num)));
  }
  // bias grad of channel 0: r summed over samples and voxels of that channel
  double bsum = 0;
  for (std::int64_t n = 0; n < 2; ++n)
    for (std::int64_t i = 0; i < 60; ++i) bsum += r[n * 180 + i];
  CHECK(ps.at("c.bias").grad[0] == doctest::Approx(bsum).epsilon(1e-4));
}

TEST_CASE("linear gradients") {
  std::mt19937 g(3);
  ParamStore ps;
  nn::Linear lin(ps, "l", Role::proxy_head, 6, 4);
  randomize(ps.at("l.weight").value, g);
  Tensor x({3, 6});
  randomize(x, g);
  Tensor r({3, 4});
  randomize(r, g);
  lin.forward(x);
  ps.zero_grad();
  const Tensor dx = lin.backward(r);
  check_input_grad([&](const Tensor& xx) { return lin.forward(xx); }, x, dx, r, 1e-3);
  // dW = r^T x
  for (int o = 0; o < 4; ++o)
    for (int i = 0; i < 6; ++i) {
      double s = 0;
      for (int n = 0; n < 3; ++n) s += static_cast<double>(r[n * 4 + o]) * x[n * 6 + i];
      CHECK(ps.at("l.weight").grad[o * 6 + i] == doctest::Approx(s).epsilon(1e-5));
    }
}

TEST_CASE("max pooling routes gradients to the argmax") {
  Tensor x({1, 1, 2, 2, 2}, std::vector<float>{1, 5, 2, 3, 0, 4, 7, 6});
  nn::MaxPool3d pool({2, 2, 2});
  const Tensor y = pool.forward(x);
  CHECK(y.values()[0] == 7.0f);
  const Tensor dx = pool.backward(Tensor({1, 1, 1, 1, 1}, std::vector<float>{2.0f}));
  CHECK(dx.values()[6] == 2.0f);
  float sum = 0;
  for (float v : dx.values()) sum += v;
  CHECK(sum == 2.0f);
  nn::MaxPool3d bad({3, 1, 1});
  CHECK_THROWS(bad.forward(x));
}

TEST_CASE("anisotropic pooling and relu") {
  std::mt19937 g(4);
  Tensor x({2, 3, 4, 6, 2});
  randomize(x, g);
  nn::MaxPool3d pool({2, 3, 1});
  const Tensor y = pool.forward(x);
  CHECK(y.shape() == std::vector<std::int64_t>{2, 3, 2, 2, 2});
  nn::ReLU relu;
  const Tensor z = relu.forward(x);
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(z[i] == std::max(0.0f, x[i]));
}

TEST_CASE("global average pooling") {
  std::mt19937 g(5);
  Tensor x({2, 3, 2, 3, 4});
  randomize(x, g);
  nn::GlobalAvgPool gap;
  const Tensor y = gap.forward(x);
  CHECK(y.shape() == std::vector<std::int64_t>{2, 3});
  double s = 0;
  for (int i = 0; i < 24; ++i) s += x[24 + i];
  CHECK(y[1] == doctest::Approx(s / 24));
  Tensor r({2, 3});
  randomize(r, g);
  check_input_grad([&](const Tensor& xx) { return gap.forward(xx); }, x, gap.backward(r), r, 1e-3);
}

TEST_CASE("voxel shuffle places channels on sub-voxels and unshuffle inverts it") {
  // 1 class, factors (2,1,2): 4 input channels on a 1x1x1 grid.
  Tensor x({1, 4, 1, 1, 1}, std::vector<float>{0, 1, 2, 3});
  const Tensor y = voxel_shuffle(x, {2, 1, 2});
  REQUIRE(y.shape() == std::vector<std::int64_t>{1, 1, 2, 1, 2});
  // channel (i*fy + j)*fz + k -> (i, j, k)
  CHECK(y.values()[0] == 0);  // (0,0,0)
  CHECK(y.values()[1] == 1);  // (0,0,1)
  CHECK(y.values()[2] == 2);  // (1,0,0)
  CHECK(y.values()[3] == 3);  // (1,0,1)

  std::mt19937 g(6);
  for (auto f : std::vector<std::array<std::int64_t, 3>>{{2, 2, 2}, {1, 4, 2}, {8, 8, 1}, {3, 1, 1}}) {
    Tensor t({2, 3 * f[0] * f[1] * f[2], 2, 3, 2});
    randomize(t, g);
    CHECK(voxel_unshuffle(voxel_shuffle(t, f), f) == t);
    Tensor u({2, 3, 2 * f[0], 3 * f[1], 2 * f[2]});
    randomize(u, g);
    CHECK(voxel_shuffle(voxel_unshuffle(u, f), f) == u);
  }
}

TEST_CASE("parameter init is seeded by name") {
  ParamStore a, b;
  nn::Conv3d ca(a, "enc.s0.c0", Role::encoder, 2, 4, 3);
  nn::Linear la(a, "head.x", Role::proxy_head, 5, 3);
  nn::Conv3d cb(b, "enc.s0.c0", Role::encoder, 2, 4, 3);
  init_params(a, 7);
  init_params(b, 7);
  CHECK(a.at("enc.s0.c0.weight").value == b.at("enc.s0.c0.weight").value);
  const double bound = std::sqrt(6.0 / (2 * 27));
  for (float w : a.at("enc.s0.c0.weight").value.values()) CHECK(std::abs(w) <= bound);
  for (float w : a.at("enc.s0.c0.bias").value.values()) CHECK(w == 0.0f);
  ParamStore c;
  nn::Conv3d cc(c, "enc.s0.c0", Role::encoder, 2, 4, 3);
  init_params(c, 8);
  CHECK_FALSE(a.at("enc.s0.c0.weight").value == c.at("enc.s0.c0.weight").value);
  CHECK(a.count(Role::encoder) == 2 * 4 * 27 + 4);
  CHECK(a.count(Role::proxy_head) == 5 * 3 + 3);
}
