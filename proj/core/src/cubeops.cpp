#include "rubikssl/cubeops.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rubikssl/errors.hpp"
#include "rubikssl/rng.hpp"

namespace rubikssl {

namespace fs = std::filesystem;

GridPlacement plan_grid(const Shape4& volume, const GridSpec& spec, std::uint64_t seed) {
  for (int a = 0; a < 3; ++a) {
    if (spec.grid[a] < 1) throw ConfigError("grid counts must be positive");
    if (spec.cube[a] < 1) throw ConfigError("cube size must be positive");
  }
  if (spec.cube_count() < 2) throw ConfigError("grid must contain at least 2 cubes");
  if (spec.gap < 0) throw ConfigError("gap must be non-negative");
  if (spec.jitter < 0) throw ConfigError("jitter must be non-negative");

  static constexpr const char* kAxis[3] = {"x", "y", "z"};
  const std::int64_t extent[3] = {volume.x, volume.y, volume.z};
  Rng rng(derive_seed(seed, {0x9a1dULL}));

  GridPlacement out;
  for (int a = 0; a < 3; ++a) {
    const std::int64_t g = spec.grid[a];
    const std::int64_t c = spec.cube[a];
    const std::int64_t full = g * c + (g - 1) * spec.gap + 2 * spec.jitter;
    std::int64_t gap = g > 1 ? spec.gap : 0;
    if (full > extent[a]) {
      const std::int64_t bare = g * c + 2 * spec.jitter;
      if (spec.strict_gap || bare > extent[a]) {
        const std::int64_t required = spec.strict_gap ? full : bare;
        throw ConfigError("grid does not fit along " + std::string(kAxis[a]) + ": requires " +
                          std::to_string(required) + " voxels (" + std::to_string(g) + "x" + std::to_string(c) +
                          (spec.strict_gap ? " + gaps of " + std::to_string(spec.gap) : std::string()) +
                          " + 2x jitter " + std::to_string(spec.jitter) + "), volume has " +
                          std::to_string(extent[a]));
      }
      gap = (extent[a] - bare) / (g - 1);
    }
    out.effective_gap[a] = gap;
    const std::int64_t block = g * c + (g - 1) * gap;
    const std::int64_t offset = spec.jitter > 0 ? rng.between(-spec.jitter, spec.jitter) : 0;
    out.origin[a] = (extent[a] - block) / 2 + offset;
  }
  for (std::int64_t i = 0; i < spec.grid[0]; ++i)
    for (std::int64_t j = 0; j < spec.grid[1]; ++j)
      for (std::int64_t k = 0; k < spec.grid[2]; ++k) {
        out.corners.push_back({out.origin[0] + i * (spec.cube[0] + out.effective_gap[0]),
                               out.origin[1] + j * (spec.cube[1] + out.effective_gap[1]),
                               out.origin[2] + k * (spec.cube[2] + out.effective_gap[2])});
      }
  return out;
}

std::vector<Cube> partition(const Volume& v, const GridSpec& spec, std::uint64_t seed) {
  const auto& s = v.shape();
  const GridPlacement place = plan_grid(s, spec, seed);
  const Shape4 cs{s.c, spec.cube[0], spec.cube[1], spec.cube[2]};
  std::vector<Cube> cubes;
  cubes.reserve(place.corners.size());
  for (const auto& corner : place.corners) {
    Cube cube{cs, std::vector<float>(static_cast<std::size_t>(cs.numel()))};
    float* dst = cube.data.data();
    for (std::int64_t c = 0; c < cs.c; ++c)
      for (std::int64_t x = 0; x < cs.x; ++x)
        for (std::int64_t y = 0; y < cs.y; ++y) {
          const float* src = v.data().data() + s.index(c, corner[0] + x, corner[1] + y, corner[2]);
          dst = std::copy(src, src + cs.z, dst);
        }
    cubes.push_back(std::move(cube));
  }
  return cubes;
}

Rotation rotation_from_flags(bool hor, bool ver) {
  if (hor && ver) return Rotation::both;
  if (hor) return Rotation::hor;
  if (ver) return Rotation::ver;
  return Rotation::none;
}

Cube rotate_cube(const Cube& cube, Rotation mode) {
  if (mode == Rotation::none) return cube;
  // Each mode is a set of reversed axes; hor then ver reverses x and z only.
  const bool fx = mode == Rotation::hor || mode == Rotation::both;
  const bool fy = mode == Rotation::hor || mode == Rotation::ver;
  const bool fz = mode == Rotation::ver || mode == Rotation::both;
  const auto& s = cube.shape;
  Cube out{s, std::vector<float>(cube.data.size())};
  for (std::int64_t c = 0; c < s.c; ++c)
    for (std::int64_t x = 0; x < s.x; ++x)
      for (std::int64_t y = 0; y < s.y; ++y) {
        const std::int64_t sx = fx ? s.x - 1 - x : x;
        const std::int64_t sy = fy ? s.y - 1 - y : y;
        const float* src = cube.data.data() + s.index(c, sx, sy, 0);
        float* dst = out.data.data() + s.index(c, x, y, 0);
        if (fz) {
          std::reverse_copy(src, src + s.z, dst);
        } else {
          std::copy(src, src + s.z, dst);
        }
      }
  return out;
}

ProxySample make_proxy_sample(const Volume& v, const GridSpec& spec, const PermutationBank& bank, double rot_prob,
                              std::uint64_t seed) {
  if (!(rot_prob >= 0.0 && rot_prob <= 1.0)) throw ArgumentError("rot_prob must lie in [0, 1]");
  if (bank.m != spec.cube_count()) {
    throw ConfigError("bank has M=" + std::to_string(bank.m) + " but the grid has " +
                      std::to_string(spec.cube_count()) + " cubes");
  }
  const auto canonical = partition(v, spec, seed);
  Rng rng(derive_seed(seed, {0x9e7aULL}));

  ProxySample out;
  out.perm_index = static_cast<int>(rng.below(static_cast<std::uint64_t>(bank.k)));
  auto slots = apply_permutation(bank.perms[static_cast<std::size_t>(out.perm_index)], canonical);
  out.g_hor.resize(slots.size());
  out.g_ver.resize(slots.size());
  out.cubes.reserve(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const bool hor = rng.bernoulli(rot_prob);
    const bool ver = rng.bernoulli(rot_prob);
    out.g_hor[i] = hor;
    out.g_ver[i] = ver;
    out.cubes.push_back(rotate_cube(slots[i], rotation_from_flags(hor, ver)));
  }
  return out;
}

std::vector<Cube> recover(const ProxySample& sample, const PermutationBank& bank) {
  const auto m = static_cast<std::size_t>(bank.m);
  if (sample.cubes.size() != m || sample.g_hor.size() != m || sample.g_ver.size() != m) {
    throw ValidationError("proxy sample has " + std::to_string(sample.cubes.size()) + " cubes, " +
                          std::to_string(sample.g_hor.size()) + "/" + std::to_string(sample.g_ver.size()) +
                          " flags; bank expects " + std::to_string(m));
  }
  if (sample.perm_index < 0 || sample.perm_index >= bank.k) {
    throw ValidationError("perm_index " + std::to_string(sample.perm_index) + " outside bank of " +
                          std::to_string(bank.k));
  }
  std::vector<Cube> upright;
  upright.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (sample.g_hor[i] > 1 || sample.g_ver[i] > 1) throw ValidationError("rotation flags must be 0 or 1");
    // Both flips are involutions and commute, so re-applying undoes them.
    upright.push_back(rotate_cube(sample.cubes[i], rotation_from_flags(sample.g_hor[i], sample.g_ver[i])));
  }
  return apply_permutation(invert(bank.perms[static_cast<std::size_t>(sample.perm_index)]), upright);
}

void save_proxy_sample(const ProxySample& sample, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < sample.cubes.size(); ++i) {
    const auto& c = sample.cubes[i];
    char name[32];
    std::snprintf(name, sizeof(name), "cube_%02zu.rv01", i);
    save_volume(Volume(c.shape, c.data), dir / name);
  }
  nlohmann::ordered_json j;
  j["cubes"] = sample.cubes.size();
  j["perm_index"] = sample.perm_index;
  j["g_hor"] = sample.g_hor;
  j["g_ver"] = sample.g_ver;
  std::ofstream out(dir / "labels.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "labels.json").string());
  out << j.dump() << '\n';
}

ProxySample load_proxy_sample(const fs::path& dir) {
  std::ifstream in(dir / "labels.json");
  if (!in) throw IoError("cannot open " + (dir / "labels.json").string());
  std::stringstream ss;
  ss << in.rdbuf();
  ProxySample s;
  std::size_t n = 0;
  try {
    const auto j = nlohmann::json::parse(ss.str());
    n = j.at("cubes").get<std::size_t>();
    s.perm_index = j.at("perm_index").get<int>();
    s.g_hor = j.at("g_hor").get<std::vector<std::uint8_t>>();
    s.g_ver = j.at("g_ver").get<std::vector<std::uint8_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(dir.string() + ": malformed labels.json: " + e.what());
  }
  for (std::size_t i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "cube_%02zu.rv01", i);
    const Volume v = load_volume(dir / name);
    s.cubes.push_back(Cube{v.shape(), std::vector<float>(v.data().begin(), v.data().end())});
  }
  return s;
}

}  // namespace rubikssl
