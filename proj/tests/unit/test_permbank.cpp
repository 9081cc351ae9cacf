#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "rubikssl/errors.hpp"
#include "rubikssl/permbank.hpp"

using namespace rubikssl;

namespace {

Permutation random_perm(int m, std::mt19937& g) {
  std::vector<int> v(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) v[static_cast<std::size_t>(i)] = i + 1;
  std::shuffle(v.begin(), v.end(), g);
  return Permutation(v);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("permutations validate their entries") {
  CHECK_THROWS_AS(Permutation({1, 1, 3}), ArgumentError);
  CHECK_THROWS_AS(Permutation({0, 1, 2}), ArgumentError);
  CHECK_THROWS_AS(Permutation({1, 2, 4}), ArgumentError);
  CHECK(Permutation::identity(4).values() == std::vector<int>{1, 2, 3, 4});
}

TEST_CASE("hamming_distance examples") {
  const Permutation id = Permutation::identity(8);
  CHECK(hamming_distance(id, id) == 0);
  CHECK(hamming_distance(id, Permutation({2, 1, 3, 4, 5, 6, 7, 8})) == 2);
  CHECK(hamming_distance(Permutation({1, 2, 3}), Permutation({2, 3, 1})) == 3);
  CHECK_THROWS_AS(hamming_distance(id, Permutation::identity(7)), ArgumentError);
}

TEST_CASE("hamming_distance is a metric on permutations and never 1") {
  std::mt19937 g(1);
  for (int t = 0; t < 2000; ++t) {
    const int m = 2 + t % 9;
    const auto a = random_perm(m, g), b = random_perm(m, g), c = random_perm(m, g);
    const int ab = hamming_distance(a, b);
    CHECK(ab >= 0);
    CHECK(ab <= m);
    CHECK(ab != 1);
    CHECK(ab == hamming_distance(b, a));
    CHECK((ab == 0) == (a == b));
    CHECK(hamming_distance(a, c) <= ab + hamming_distance(b, c));
    CHECK(ab == oracle::hamming(a.values(), b.values()));
  }
}

TEST_CASE("apply_permutation and invert") {
  const std::vector<int> cubes{1, 2, 3, 4, 5, 6, 7, 8};
  const Permutation p({2, 5, 8, 4, 1, 7, 3, 6});
  CHECK(apply_permutation(p, cubes) == std::vector<int>{2, 5, 8, 4, 1, 7, 3, 6});
  CHECK(apply_permutation(Permutation::identity(8), cubes) == cubes);
  CHECK(apply_permutation(invert(p), apply_permutation(p, cubes)) == cubes);
  CHECK(invert(Permutation({2, 3, 1})) == Permutation({3, 1, 2}));
  CHECK(invert(Permutation::identity(5)) == Permutation::identity(5));
  CHECK_THROWS_AS(apply_permutation(p, std::vector<int>{1, 2, 3}), ArgumentError);

  std::mt19937 g(7);
  for (int t = 0; t < 1000; ++t) {
    const auto q = random_perm(1 + t % 12, g);
    CHECK(invert(invert(q)) == q);
    std::vector<int> items(static_cast<std::size_t>(q.size()));
    for (std::size_t i = 0; i < items.size(); ++i) items[i] = static_cast<int>(100 + i);
    CHECK(apply_permutation(invert(q), apply_permutation(q, items)) == items);
  }
}

TEST_CASE("greedy bank matches the brute-force optimum for M=3") {
  for (int k = 2; k <= 6; ++k) {
    for (std::uint64_t seed : {0ull, 1ull, 99ull}) {
      const auto bank = generate_bank(3, k, seed);
      CHECK(bank.min_pairwise_distance == oracle::best_min_distance(3, k));
    }
  }
  CHECK(oracle::best_min_distance(3, 2) == 3);
}

TEST_CASE("M=2, K=2 is both permutations") {
  const auto bank = generate_bank(2, 2, 5);
  std::set<std::vector<int>> got;
  for (const auto& p : bank.perms) got.insert(p.values());
  CHECK(got == std::set<std::vector<int>>{{1, 2}, {2, 1}});
  CHECK(bank.min_pairwise_distance == 2);
}

TEST_CASE("M=8, K=100 follows the greedy rule from its starting permutation") {
  const auto bank = generate_bank(8, 100, 7);
  REQUIRE(bank.perms.size() == 100);
  CHECK(bank.min_pairwise_distance == min_pairwise_distance(bank.perms));

  // Independent re-run of the greedy rule from the same start.
  const auto all = oracle::all_permutations(8);
  std::vector<std::vector<int>> chosen{bank.perms.front().values()};
  std::vector<int> mind(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) mind[i] = oracle::hamming(all[i], chosen[0]);
  while (chosen.size() < 100) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < all.size(); ++i)
      if (mind[i] > mind[best]) best = i;  // all[] is lexicographic, so the first max wins ties
    chosen.push_back(all[best]);
    for (std::size_t i = 0; i < all.size(); ++i) mind[i] = std::min(mind[i], oracle::hamming(all[i], all[best]));
  }
  for (std::size_t i = 0; i < 100; ++i) CHECK(bank.perms[i].values() == chosen[i]);

  for (std::size_t i = 0; i < 100; ++i)
    for (std::size_t j = i + 1; j < 100; ++j) CHECK(hamming_distance(bank.perms[i], bank.perms[j]) >= bank.min_pairwise_distance);
}

TEST_CASE("bank files are seed-deterministic byte for byte") {
  oracle::ScopedDir dir("bank");
  save_bank(generate_bank(6, 20, 3), dir.path / "a.json");
  save_bank(generate_bank(6, 20, 3), dir.path / "b.json");
  save_bank(generate_bank(6, 20, 4), dir.path / "c.json");
  CHECK(slurp(dir.path / "a.json") == slurp(dir.path / "b.json"));
  CHECK(slurp(dir.path / "a.json") != slurp(dir.path / "c.json"));
  CHECK(slurp(dir.path / "a.json").rfind(R"({"M":6,"K":20,"seed":3,"min_pairwise_distance":)", 0) == 0);
  const auto back = load_bank(dir.path / "a.json");
  CHECK(back.perms == generate_bank(6, 20, 3).perms);
  CHECK(bank_hash(back) == bank_hash(generate_bank(6, 20, 3)));
}

TEST_CASE("bank loading validates its invariants") {
  CHECK_THROWS_AS(bank_from_json(R"({"M":3,"K":2,"seed":0,"min_pairwise_distance":3,"perms":[[1,2,3],[1,2,3]]})"),
                  ValidationError);
  CHECK_THROWS_AS(bank_from_json(R"({"M":3,"K":2,"seed":0,"min_pairwise_distance":2,"perms":[[1,2,3],[2,3,1]]})"),
                  ValidationError);
  CHECK_THROWS_AS(bank_from_json(R"({"M":3,"K":3,"seed":0,"min_pairwise_distance":3,"perms":[[1,2,3],[2,3,1]]})"),
                  ValidationError);
  CHECK_THROWS_AS(bank_from_json(R"({"M":3,"K":2,"seed":0,"min_pairwise_distance":3,"perms":[[1,2,2],[2,3,1]]})"),
                  ValidationError);
  CHECK_THROWS_AS(bank_from_json("{"), FormatError);
  const auto ok = bank_from_json(R"({"M":3,"K":2,"seed":0,"min_pairwise_distance":3,"perms":[[1,2,3],[2,3,1]]})");
  CHECK(ok.k == 2);
}

TEST_CASE("bank size limits") {
  CHECK_THROWS_AS(generate_bank(3, 7, 0), ConfigError);
  CHECK_THROWS_AS(generate_bank(3, 1, 0), ConfigError);
  CHECK_THROWS_AS(generate_bank(13, 10, 0), CapacityError);
}

TEST_CASE("sampled mode handles M above the enumeration limit") {
  const auto a = generate_bank_sampled(14, 10, 2, 5000);
  const auto b = generate_bank_sampled(14, 10, 2, 5000);
  CHECK(a.sampled);
  CHECK(a.perms == b.perms);
  CHECK(a.min_pairwise_distance == min_pairwise_distance(a.perms));
  CHECK(a.min_pairwise_distance >= 10);
  CHECK(bank_from_json(bank_to_json(a)).perms == a.perms);
}
