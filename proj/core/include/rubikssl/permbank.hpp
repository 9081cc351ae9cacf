#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rubikssl/errors.hpp"

namespace rubikssl {

/// A bijection on {1, ..., M}, stored one-based as in the cube labels.
class Permutation {
 public:
  Permutation() = default;
  /// Throws ArgumentError unless `order` is a rearrangement of 1..M.
  explicit Permutation(std::vector<int> order);

  static Permutation identity(int m);

  int size() const { return static_cast<int>(order_.size()); }
  int operator[](int i) const { return order_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& values() const { return order_; }

  friend bool operator==(const Permutation&, const Permutation&) = default;
  friend auto operator<=>(const Permutation&, const Permutation&) = default;

 private:
  std::vector<int> order_;
};

/// Number of positions where a and b differ. Throws ArgumentError on size mismatch.
int hamming_distance(const Permutation& a, const Permutation& b);

/// q with q[p[i] - 1] = i + 1.
Permutation invert(const Permutation& p);

/// out[i] = items[p[i] - 1].
template <typename T>
std::vector<T> apply_permutation(const Permutation& p, std::span<const T> items) {
  if (static_cast<int>(items.size()) != p.size()) {
    throw ArgumentError("apply_permutation: " + std::to_string(items.size()) + " items for a permutation of " +
                        std::to_string(p.size()));
  }
  std::vector<T> out;
  out.reserve(items.size());
  for (int i = 0; i < p.size(); ++i) out.push_back(items[static_cast<std::size_t>(p[i] - 1)]);
  return out;
}

template <typename T>
std::vector<T> apply_permutation(const Permutation& p, const std::vector<T>& items) {
  return apply_permutation(p, std::span<const T>(items));
}

/// K permutations of M cube indices chosen to be far apart in Hamming distance.
struct PermutationBank {
  int m = 0;
  int k = 0;
  std::uint64_t seed = 0;
  int min_pairwise_distance = 0;
  bool sampled = false;  // candidates drawn from a random pool, not enumerated
  std::vector<Permutation> perms;
};

inline constexpr int kMaxEnumeratedCubes = 12;
inline constexpr std::size_t kDefaultSamplingPool = 1'000'000;

std::uint64_t factorial(int m);

/// Greedy farthest-point selection over all M! permutations.
///
/// Starts from a seed-chosen random permutation, then repeatedly appends the
/// permutation whose minimum distance to the selected set is largest; ties go
/// to the lexicographically smallest permutation.
///
/// Throws ConfigError for K < 2 or K > M!, CapacityError for M > 12
/// (use generate_bank_sampled there).
PermutationBank generate_bank(int m, int k, std::uint64_t seed);

/// Same greedy rule over a pool of `pool_size` distinct random permutations.
PermutationBank generate_bank_sampled(int m, int k, std::uint64_t seed, std::size_t pool_size = kDefaultSamplingPool);

/// Smallest Hamming distance over all pairs; 0 for banks of fewer than 2.
int min_pairwise_distance(std::span<const Permutation> perms);

std::string bank_to_json(const PermutationBank& bank);
/// Validates every permutation, distinctness, K, and that the stored
/// min_pairwise_distance matches a recomputation (ValidationError otherwise).
PermutationBank bank_from_json(const std::string& text);

void save_bank(const PermutationBank& bank, const std::filesystem::path& path);
PermutationBank load_bank(const std::filesystem::path& path);

/// FNV-1a of the canonical JSON; identifies the label space in checkpoints.
std::string bank_hash(const PermutationBank& bank);

}  // namespace rubikssl
