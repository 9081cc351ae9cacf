#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "rubikssl/cubeops.hpp"
#include "rubikssl/errors.hpp"
#include "rubikssl/synthetic.hpp"

using namespace rubikssl;

namespace {

Cube random_cube(Shape4 s, std::mt19937& g) {
  std::uniform_real_distribution<float> d(-1, 1);
  Cube c{s, std::vector<float>(static_cast<std::size_t>(s.numel()))};
  for (auto& x : c.data) x = d(g);
  return c;
}

Volume index_volume(Shape4 s) {
  std::vector<float> d(static_cast<std::size_t>(s.numel()));
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<float>(i);
  return Volume(s, d);
}

// out(c,x,y,z) = in(c, rx ? X-1-x : x, ...), written out by hand.
Cube reversed(const Cube& in, bool rx, bool ry, bool rz) {
  Cube out = in;
  const Shape4 s = in.shape;
  for (std::int64_t c = 0; c < s.c; ++c)
    for (std::int64_t x = 0; x < s.x; ++x)
      for (std::int64_t y = 0; y < s.y; ++y)
        for (std::int64_t z = 0; z < s.z; ++z)
          out.data[static_cast<std::size_t>(s.index(c, x, y, z))] =
              in.at(c, rx ? s.x - 1 - x : x, ry ? s.y - 1 - y : y, rz ? s.z - 1 - z : z);
  return out;
}

}  // namespace

TEST_CASE("the 230x270x30 configuration does not fit with a strict 10 voxel gap") {
  GridSpec spec{{2, 2, 2}, {64, 64, 12}, 10, 0, true};
  try {
    plan_grid({1, 230, 270, 30}, spec, 0);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("z") != std::string::npos);
    CHECK(msg.find("34") != std::string::npos);
    CHECK(msg.find("30") != std::string::npos);
  }
}

TEST_CASE("by default the gap shrinks per axis until the grid fits") {
  GridSpec spec{{2, 2, 2}, {64, 64, 12}, 10, 0, false};
  const auto pl = plan_grid({1, 230, 270, 30}, spec, 0);
  CHECK(pl.effective_gap == std::array<std::int64_t, 3>{10, 10, 6});
  spec.cube = {64, 64, 16};
  CHECK_THROWS_AS(plan_grid({1, 230, 270, 30}, spec, 0), ConfigError);
}

TEST_CASE("150^3 with 64^3 cubes and gap 10: 8 disjoint cubes, 10 voxels apart") {
  const GridSpec spec{{2, 2, 2}, {64, 64, 64}, 10, 0, false};
  const auto pl = plan_grid({1, 150, 150, 150}, spec, 0);
  REQUIRE(pl.corners.size() == 8);
  CHECK(pl.origin == std::array<std::int64_t, 3>{6, 6, 6});
  for (std::size_t i = 0; i < 8; ++i) {
    // x-major canonical order
    const std::array<std::int64_t, 3> cell{static_cast<std::int64_t>(i / 4), static_cast<std::int64_t>(i / 2 % 2),
                                           static_cast<std::int64_t>(i % 2)};
    for (int a = 0; a < 3; ++a) CHECK(pl.corners[i][a] == 6 + cell[a] * 74);
  }
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = i + 1; j < 8; ++j) {
      std::int64_t sep = -1;
      for (int a = 0; a < 3; ++a) {
        const auto lo = std::max(pl.corners[i][a], pl.corners[j][a]);
        const auto hi = std::min(pl.corners[i][a], pl.corners[j][a]) + 64;
        sep = std::max(sep, lo - hi);
      }
      CHECK(sep >= 10);
    }
  }
}

TEST_CASE("partition extracts the planned regions") {
  const Volume v = index_volume({2, 40, 36, 34});
  const GridSpec spec{{2, 2, 2}, {12, 10, 8}, 4, 3, false};
  for (std::uint64_t seed : {0ull, 5ull}) {
    const auto pl = plan_grid(v.shape(), spec, seed);
    const auto cubes = partition(v, spec, seed);
    REQUIRE(cubes.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(cubes[i].shape == Shape4{2, 12, 10, 8});
      for (std::int64_t c = 0; c < 2; ++c)
        for (std::int64_t x = 0; x < 12; x += 5)
          for (std::int64_t y = 0; y < 10; y += 3)
            for (std::int64_t z = 0; z < 8; z += 7)
              CHECK(cubes[i].at(c, x, y, z) == v.at(c, pl.corners[i][0] + x, pl.corners[i][1] + y, pl.corners[i][2] + z));
      for (int a = 0; a < 3; ++a) {
        CHECK(pl.corners[i][a] >= 0);
        CHECK(pl.corners[i][a] + spec.cube[a] <= (a == 0 ? 40 : a == 1 ? 36 : 34));
      }
    }
    CHECK(partition(v, spec, seed) == cubes);
  }
}

TEST_CASE("jitter moves the grid within bounds") {
  const GridSpec spec{{2, 2, 2}, {10, 10, 10}, 4, 3, false};
  std::set<std::array<std::int64_t, 3>> origins;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto pl = plan_grid({1, 40, 40, 40}, spec, s);
    for (int a = 0; a < 3; ++a) {
      CHECK(pl.origin[a] >= 8 - 3);
      CHECK(pl.origin[a] <= 8 + 3);
    }
    origins.insert(pl.origin);
  }
  CHECK(origins.size() > 5);
}

TEST_CASE("rotate_cube on a 1x2x2x1 cube") {
  // [[a,b],[c,d]] indexed [x][y]
  const Cube c{{1, 2, 2, 1}, {1, 2, 3, 4}};
  CHECK(rotate_cube(c, Rotation::hor).data == std::vector<float>{4, 3, 2, 1});
  CHECK(rotate_cube(c, Rotation::none) == c);
}

TEST_CASE("rotations form a Klein four-group and match axis reversals") {
  std::mt19937 g(3);
  for (int t = 0; t < 200; ++t) {
    const Cube c = random_cube({1 + t % 2, 3 + t % 4, 2 + t % 3, 4 + t % 5}, g);
    const Cube h = rotate_cube(c, Rotation::hor), v = rotate_cube(c, Rotation::ver);
    CHECK(h == reversed(c, true, true, false));
    CHECK(v == reversed(c, false, true, true));
    CHECK(rotate_cube(c, Rotation::both) == reversed(c, true, false, true));
    CHECK(rotate_cube(h, Rotation::hor) == c);
    CHECK(rotate_cube(v, Rotation::ver) == c);
    CHECK(rotate_cube(h, Rotation::ver) == rotate_cube(v, Rotation::hor));
    CHECK(rotate_cube(h, Rotation::ver) == rotate_cube(c, Rotation::both));
  }
  CHECK(rotation_from_flags(false, false) == Rotation::none);
  CHECK(rotation_from_flags(true, true) == Rotation::both);
}

TEST_CASE("make_proxy_sample labels and determinism") {
  const auto lv = SyntheticGenerator(1, {1, 48, 48, 48}, 2, 1).make(0);
  const GridSpec spec{{2, 2, 2}, {16, 16, 16}, 4, 0, false};
  const auto bank = generate_bank(8, 10, 1);
  const auto s0 = make_proxy_sample(lv.volume, spec, bank, 0.0, 4);
  CHECK(s0.g_hor == std::vector<std::uint8_t>(8, 0));
  CHECK(s0.g_ver == std::vector<std::uint8_t>(8, 0));
  const auto s1 = make_proxy_sample(lv.volume, spec, bank, 1.0, 4);
  CHECK(s1.g_hor == std::vector<std::uint8_t>(8, 1));
  CHECK(s1.g_ver == std::vector<std::uint8_t>(8, 1));
  CHECK(s0.perm_index >= 0);
  CHECK(s0.perm_index < 10);
  const auto a = make_proxy_sample(lv.volume, spec, bank, 0.5, 9);
  const auto b = make_proxy_sample(lv.volume, spec, bank, 0.5, 9);
  CHECK(a.cubes == b.cubes);
  CHECK(a.g_hor == b.g_hor);
  CHECK(a.perm_index == b.perm_index);
  CHECK_THROWS_AS(make_proxy_sample(lv.volume, spec, generate_bank(4, 3, 0), 0.5, 0), ConfigError);
}

TEST_CASE("rotation and permutation draws have the right frequencies") {
  const auto lv = SyntheticGenerator(1, {1, 32, 32, 32}, 2, 1).make(0);
  const GridSpec spec{{2, 2, 2}, {4, 4, 4}, 2, 0, false};
  const auto bank = generate_bank(8, 5, 1);
  double hor = 0;
  std::vector<int> counts(5);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto s = make_proxy_sample(lv.volume, spec, bank, 0.5, static_cast<std::uint64_t>(i));
    for (auto f : s.g_hor) hor += f;
    ++counts[static_cast<std::size_t>(s.perm_index)];
  }
  hor /= 8.0 * n;
  CHECK(hor >= 0.48);
  CHECK(hor <= 0.52);
  for (int c : counts) CHECK(std::abs(c - n / 5) < 5 * std::sqrt(n * 0.2 * 0.8));
}

TEST_CASE("recover inverts make_proxy_sample at jitter 0") {
  const SyntheticGenerator gen(20, {1, 40, 40, 40}, 2, 3);
  const GridSpec spec{{2, 2, 2}, {16, 16, 16}, 4, 0, false};
  const auto bank = generate_bank(8, 30, 2);
  for (int i = 0; i < 20; ++i) {
    const auto v = gen.make(i).volume;
    const auto s = make_proxy_sample(v, spec, bank, 0.5, static_cast<std::uint64_t>(i));
    CHECK(recover(s, bank) == partition(v, spec, static_cast<std::uint64_t>(i)));
  }
}

TEST_CASE("recover with one rotated cube and a transposition") {
  const auto v = SyntheticGenerator(1, {1, 40, 40, 40}, 2, 3).make(0).volume;
  const GridSpec spec{{2, 2, 2}, {16, 16, 16}, 4, 0, false};
  PermutationBank bank{8, 2, 0, 2, false, {Permutation::identity(8), Permutation({2, 1, 3, 4, 5, 6, 7, 8})}};
  const auto orig = partition(v, spec, 0);
  ProxySample s;
  s.perm_index = 1;
  s.cubes = apply_permutation(bank.perms[1], orig);
  s.cubes[0] = rotate_cube(s.cubes[0], Rotation::hor);
  s.g_hor = {1, 0, 0, 0, 0, 0, 0, 0};
  s.g_ver = std::vector<std::uint8_t>(8, 0);
  const auto rec = recover(s, bank);
  CHECK(rec[1] == orig[1]);
  CHECK(rec == orig);

  s.g_hor.pop_back();
  CHECK_THROWS_AS(recover(s, bank), ValidationError);
}

TEST_CASE("proxy samples survive a save/load round trip") {
  oracle::ScopedDir dir("sample");
  const auto v = SyntheticGenerator(1, {2, 40, 40, 40}, 2, 3).make(0).volume;
  const auto bank = generate_bank(8, 4, 2);
  const auto s = make_proxy_sample(v, {{2, 2, 2}, {8, 8, 8}, 4, 2, false}, bank, 0.5, 1);
  save_proxy_sample(s, dir.path / "s0");
  const auto back = load_proxy_sample(dir.path / "s0");
  CHECK(back.cubes == s.cubes);
  CHECK(back.perm_index == s.perm_index);
  CHECK(back.g_hor == s.g_hor);
  CHECK(back.g_ver == s.g_ver);
}
