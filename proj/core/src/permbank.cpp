#include "rubikssl/permbank.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rubikssl/hash.hpp"
#include "rubikssl/rng.hpp"

namespace rubikssl {

Permutation::Permutation(std::vector<int> order) : order_(std::move(order)) {
  std::vector<char> seen(order_.size() + 1, 0);
  for (int v : order_) {
    if (v < 1 || v > static_cast<int>(order_.size()) || seen[static_cast<std::size_t>(v)]) {
      throw ArgumentError("not a permutation of 1.." + std::to_string(order_.size()));
    }
    seen[static_cast<std::size_t>(v)] = 1;
  }
}

Permutation Permutation::identity(int m) {
  std::vector<int> v(static_cast<std::size_t>(m));
  std::iota(v.begin(), v.end(), 1);
  return Permutation(std::move(v));
}

int hamming_distance(const Permutation& a, const Permutation& b) {
  if (a.size() != b.size()) {
    throw ArgumentError("hamming_distance: permutations of " + std::to_string(a.size()) + " and " +
                        std::to_string(b.size()) + " elements");
  }
  int d = 0;
  for (int i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

Permutation invert(const Permutation& p) {
  std::vector<int> q(static_cast<std::size_t>(p.size()));
  for (int i = 0; i < p.size(); ++i) q[static_cast<std::size_t>(p[i] - 1)] = i + 1;
  return Permutation(std::move(q));
}

std::uint64_t factorial(int m) {
  std::uint64_t f = 1;
  for (int i = 2; i <= m; ++i) f *= static_cast<std::uint64_t>(i);
  return f;
}

int min_pairwise_distance(std::span<const Permutation> perms) {
  if (perms.size() < 2) return 0;
  int best = std::numeric_limits<int>::max();
  for (std::size_t i = 0; i < perms.size(); ++i)
    for (std::size_t j = i + 1; j < perms.size(); ++j) best = std::min(best, hamming_distance(perms[i], perms[j]));
  return best;
}

namespace {

Permutation random_permutation(int m, Rng& rng) {
  std::vector<int> v(static_cast<std::size_t>(m));
  std::iota(v.begin(), v.end(), 1);
  rng.shuffle(std::span<int>(v));
  return Permutation(std::move(v));
}

int distance(const std::vector<std::uint8_t>& a, const std::vector<int>& b) {
  int d = 0;
  for (std::size_t i = 0; i < b.size(); ++i) d += static_cast<int>(a[i]) != b[i];
  return d;
}

void check_sizes(int m, int k) {
  if (m < 1) throw ConfigError("permutation bank needs M >= 1");
  if (k < 2) throw ConfigError("permutation bank needs K >= 2");
}

}  // namespace

PermutationBank generate_bank(int m, int k, std::uint64_t seed) {
  check_sizes(m, k);
  if (m > kMaxEnumeratedCubes) {
    throw CapacityError("M=" + std::to_string(m) + " exceeds the enumeration limit of " +
                        std::to_string(kMaxEnumeratedCubes) + "; use sampling mode (generate_bank_sampled / --sample)");
  }
  const std::uint64_t total = factorial(m);
  if (static_cast<std::uint64_t>(k) > total) {
    throw ConfigError("K=" + std::to_string(k) + " exceeds M!=" + std::to_string(total));
  }

  Rng rng(seed);
  PermutationBank bank{m, k, seed, 0, false, {}};
  bank.perms.push_back(random_permutation(m, rng));

  // min_d[i]: distance from the i-th permutation (lexicographic rank) to the
  // selected set. Walking next_permutation from the identity visits ranks in
  // order, so the first strict maximum is the lexicographic tie-break.
  std::vector<std::uint8_t> min_d(total, std::numeric_limits<std::uint8_t>::max());
  std::vector<std::uint8_t> cur(static_cast<std::size_t>(m));
  while (static_cast<int>(bank.perms.size()) < k) {
    const auto& last = bank.perms.back().values();
    std::iota(cur.begin(), cur.end(), std::uint8_t{1});
    int best_d = -1;
    std::vector<std::uint8_t> best(cur);
    for (std::uint64_t r = 0; r < total; ++r) {
      const int d = std::min<int>(min_d[r], distance(cur, last));
      min_d[r] = static_cast<std::uint8_t>(d);
      if (d > best_d) {
        best_d = d;
        best = cur;
      }
      std::next_permutation(cur.begin(), cur.end());
    }
    bank.perms.emplace_back(std::vector<int>(best.begin(), best.end()));
  }
  bank.min_pairwise_distance = min_pairwise_distance(bank.perms);
  return bank;
}

PermutationBank generate_bank_sampled(int m, int k, std::uint64_t seed, std::size_t pool_size) {
  check_sizes(m, k);
  if (m <= 20 && static_cast<std::uint64_t>(k) > factorial(m)) {
    throw ConfigError("K=" + std::to_string(k) + " exceeds M!");
  }
  Rng rng(seed);
  const Permutation start = random_permutation(m, rng);

  std::set<std::vector<int>> unique;
  unique.insert(start.values());
  const std::uint64_t reachable = m <= 20 ? factorial(m) : std::numeric_limits<std::uint64_t>::max();
  const std::size_t target = static_cast<std::size_t>(std::min<std::uint64_t>(pool_size, reachable));
  if (target < static_cast<std::size_t>(k)) throw ConfigError("sampling pool smaller than K");
  while (unique.size() < target) unique.insert(random_permutation(m, rng).values());
  // std::set iterates in lexicographic order, which gives the tie-break.
  std::vector<std::vector<int>> pool(unique.begin(), unique.end());

  PermutationBank bank{m, k, seed, 0, true, {start}};
  std::vector<int> min_d(pool.size(), std::numeric_limits<int>::max());
  while (static_cast<int>(bank.perms.size()) < k) {
    const auto& last = bank.perms.back().values();
    std::size_t best = 0;
    int best_d = -1;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      int d = 0;
      for (int j = 0; j < m; ++j) d += pool[i][static_cast<std::size_t>(j)] != last[static_cast<std::size_t>(j)];
      min_d[i] = std::min(min_d[i], d);
      if (min_d[i] > best_d) {
        best_d = min_d[i];
        best = i;
      }
    }
    bank.perms.emplace_back(pool[best]);
  }
  bank.min_pairwise_distance = min_pairwise_distance(bank.perms);
  return bank;
}

std::string bank_to_json(const PermutationBank& bank) {
  nlohmann::ordered_json j;
  j["M"] = bank.m;
  j["K"] = bank.k;
  j["seed"] = bank.seed;
  j["min_pairwise_distance"] = bank.min_pairwise_distance;
  if (bank.sampled) j["mode"] = "sampled";
  auto perms = nlohmann::ordered_json::array();
  for (const auto& p : bank.perms) perms.push_back(p.values());
  j["perms"] = std::move(perms);
  return j.dump();
}

PermutationBank bank_from_json(const std::string& text) {
  PermutationBank bank;
  try {
    const auto j = nlohmann::json::parse(text);
    bank.m = j.at("M").get<int>();
    bank.k = j.at("K").get<int>();
    bank.seed = j.at("seed").get<std::uint64_t>();
    bank.min_pairwise_distance = j.at("min_pairwise_distance").get<int>();
    bank.sampled = j.value("mode", std::string("enumerated")) == "sampled";
    for (const auto& p : j.at("perms")) bank.perms.emplace_back(p.get<std::vector<int>>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed permutation bank: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ValidationError(std::string("permutation bank: ") + e.what());
  }
  if (static_cast<int>(bank.perms.size()) != bank.k) {
    throw ValidationError("permutation bank declares K=" + std::to_string(bank.k) + " but lists " +
                          std::to_string(bank.perms.size()));
  }
  std::set<std::vector<int>> seen;
  for (const auto& p : bank.perms) {
    if (p.size() != bank.m) throw ValidationError("permutation bank entry has wrong length");
    if (!seen.insert(p.values()).second) throw ValidationError("permutation bank contains duplicates");
  }
  const int actual = min_pairwise_distance(bank.perms);
  if (actual != bank.min_pairwise_distance) {
    throw ValidationError("permutation bank records min_pairwise_distance=" +
                          std::to_string(bank.min_pairwise_distance) + " but the permutations give " +
                          std::to_string(actual));
  }
  return bank;
}

void save_bank(const PermutationBank& bank, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write bank " + path.string());
  out << bank_to_json(bank) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

PermutationBank load_bank(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open bank " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return bank_from_json(ss.str());
}

std::string bank_hash(const PermutationBank& bank) { return hex64(fnv1a64(bank_to_json(bank))); }

}  // namespace rubikssl
