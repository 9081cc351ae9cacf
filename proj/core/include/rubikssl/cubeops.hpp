#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "rubikssl/permbank.hpp"
#include "rubikssl/volume.hpp"

namespace rubikssl {

/// Layout of the cube grid cut from a volume.
struct GridSpec {
  std::array<std::int64_t, 3> grid{2, 2, 2};
  std::array<std::int64_t, 3> cube{64, 64, 64};
  std::int64_t gap = 10;
  std::int64_t jitter = 0;
  /// When false an axis that cannot hold the full gap gets the largest gap
  /// that fits (down to 0). When true that situation is a ConfigError.
  bool strict_gap = false;

  int cube_count() const { return static_cast<int>(grid[0] * grid[1] * grid[2]); }
};

/// Where the cubes land inside a particular volume.
struct GridPlacement {
  std::array<std::int64_t, 3> effective_gap{};
  std::array<std::int64_t, 3> origin{};            // corner of cell (0,0,0)
  std::vector<std::array<std::int64_t, 3>> corners;  // canonical order
};

/// Dense (C, cx, cy, cz) block.
struct Cube {
  Shape4 shape;
  std::vector<float> data;

  float at(std::int64_t c, std::int64_t x, std::int64_t y, std::int64_t z) const {
    return data[static_cast<std::size_t>(shape.index(c, x, y, z))];
  }
  friend bool operator==(const Cube&, const Cube&) = default;
};

enum class Rotation { none, hor, ver, both };

/// Centers the grid block, applies the per-axis jitter drawn from `seed`, and
/// resolves per-axis gaps. Throws ConfigError (with required vs. actual
/// extent) when the grid cannot fit, and for invalid specs (M < 2, empty
/// cube, negative gap or jitter).
GridPlacement plan_grid(const Shape4& volume, const GridSpec& spec, std::uint64_t seed);

/// Cuts M cubes in canonical order: x-major, then y, then z.
std::vector<Cube> partition(const Volume& v, const GridSpec& spec, std::uint64_t seed);

/// hor = 180 degrees about z (x and y reversed); ver = 180 degrees about x
/// (y and z reversed); both = hor then ver. The shape never changes.
Cube rotate_cube(const Cube& cube, Rotation mode);

Rotation rotation_from_flags(bool hor, bool ver);

/// Cubes in branch-slot order plus the labels of both subtasks. Flag i
/// describes the cube sitting in slot i.
struct ProxySample {
  std::vector<Cube> cubes;
  int perm_index = 0;
  std::vector<std::uint8_t> g_hor;
  std::vector<std::uint8_t> g_ver;
};

/// Partition, draw a bank entry uniformly, rearrange the cubes by it, then
/// draw independent horizontal and vertical flips per slot with probability
/// rot_prob. Deterministic in `seed`.
ProxySample make_proxy_sample(const Volume& v, const GridSpec& spec, const PermutationBank& bank, double rot_prob,
                              std::uint64_t seed);

/// Undoes the flips, then the permutation. Returns cubes in canonical order.
/// Throws ValidationError when the sample does not fit the bank.
std::vector<Cube> recover(const ProxySample& sample, const PermutationBank& bank);

/// One directory per sample: cube_00.rv01 ... and labels.json.
void save_proxy_sample(const ProxySample& sample, const std::filesystem::path& dir);
ProxySample load_proxy_sample(const std::filesystem::path& dir);

}  // namespace rubikssl
