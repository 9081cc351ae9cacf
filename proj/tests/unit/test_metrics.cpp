#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rubikssl/errors.hpp"
#include "rubikssl/metrics.hpp"

using namespace rubikssl;

TEST_CASE("accuracy hand counts") {
  const std::vector<int> a{1, 2, 3, 4};
  CHECK(accuracy(a, a) == 1.0);
  CHECK(accuracy(a, std::vector<int>{0, 0, 0, 0}) == 0.0);
  CHECK(accuracy(a, std::vector<int>{1, 2, 0, 0}) == 0.5);
  CHECK(accuracy(std::vector<int>{3}, std::vector<int>{3}) == 1.0);
  CHECK_THROWS_AS(accuracy(a, std::vector<int>{1, 2}), ArgumentError);
  CHECK_THROWS_AS(accuracy(std::vector<int>{}, std::vector<int>{}), ArgumentError);
}

TEST_CASE("mean IoU hand example") {
  const std::vector<std::uint8_t> pred{0, 0, 1, 1}, truth{0, 1, 1, 1};
  const auto r = mean_iou(pred, truth, 2);
  CHECK(r.per_class[0] == doctest::Approx(0.5));
  CHECK(r.per_class[1] == doctest::Approx(2.0 / 3.0));
  CHECK(r.miou == doctest::Approx(7.0 / 12.0));

  const auto same = mean_iou(truth, truth, 2);
  CHECK(same.miou == 1.0);
}

TEST_CASE("classes absent from both masks are excluded") {
  const std::vector<std::uint8_t> pred{0, 0, 2, 2}, truth{0, 2, 2, 2};
  const auto r = mean_iou(pred, truth, 3);
  CHECK_FALSE(r.present[1]);
  CHECK(std::isnan(r.per_class[1]));
  CHECK(r.miou == doctest::Approx((0.5 + 2.0 / 3.0) / 2));
  CHECK_THROWS_AS(mean_iou(std::vector<std::uint8_t>{}, std::vector<std::uint8_t>{}, 2), ArgumentError);
  CHECK_THROWS_AS(mean_iou(pred, std::vector<std::uint8_t>{0}, 3), ArgumentError);
}

TEST_CASE("mean IoU matches set-counting oracle on random 4x4x4 masks") {
  std::mt19937 g(2024);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::uint8_t> p(64), t(64);
    std::vector<int> pi(64), ti(64);
    const double bias = trial % 10 == 0 ? 0.0 : 0.5;  // some masks hold a single class
    std::bernoulli_distribution b(bias);
    for (int i = 0; i < 64; ++i) {
      p[i] = static_cast<std::uint8_t>(coin(g));
      t[i] = static_cast<std::uint8_t>(b(g));
      pi[i] = p[i];
      ti[i] = t[i];
    }
    const auto r = mean_iou(p, t, 2);
    const auto o = oracle::iou_by_sets(pi, ti, 2);
    CHECK(r.miou == o.miou);
    for (int c = 0; c < 2; ++c) {
      CHECK(r.present[c] == o.counted[c]);
      if (o.counted[c]) CHECK(r.per_class[c] == o.per_class[c]);
    }
    CHECK(r.miou >= 0.0);
    CHECK(r.miou <= 1.0);
  }
}
