#pragma once

#include <cstdint>
#include <vector>

#include "rubikssl/volume.hpp"

namespace rubikssl {

class Rng;

/// Appearance knobs of the synthetic benchmark. Defaults are what the
/// acceptance experiments were calibrated with.
struct SyntheticOptions {
  /// Per-axis slope weights of the background ramp, before per-volume jitter.
  /// Distinct magnitudes keep each grid cell's mean intensity distinct.
  double ramp_x = 1.0;
  double ramp_y = 2.0;
  double ramp_z = 4.0;
  double ramp_jitter = 0.2;  // relative, per volume and axis
  double ramp_scale = 1.0;   // multiplies all three slopes
  /// Fixed "anatomy": ellipsoids at canonical positions, one per octant
  /// when 8, jittered per volume, never part of the mask. Their shapes and
  /// polarities differ, so position and orientation can be read from
  /// structure rather than from the ramp alone. Landmarks draw from their
  /// own stream: switching them on leaves blobs, mask and noise unchanged.
  int landmarks = 0;
  double landmark_amplitude = 1.0;
  double landmark_jitter = 0.04;  // fraction of the axis extent
  double blob_amplitude = 1.5;
  double blob_radius_min = 0.07;  // fraction of the axis extent
  double blob_radius_max = 0.12;
  double noise_sigma = 0.05;
  int num_seg_classes = 2;  // background + blob
};

/// Deterministic generator of labelled volumes. Item i depends only on
/// (n, dims, num_classes, seed, i), so items can be produced lazily, in any
/// order, or in parallel.
///
/// Each volume is a smooth ramp over all three axes (so a cube's grid
/// position and its orientation are recoverable from its content) plus
/// 1 + class ellipsoidal blobs. Even classes have bright blobs, odd classes
/// dark ones. The mask marks blob voxels with 1, background with 0.
class SyntheticGenerator {
 public:
  /// Throws ConfigError when n < 1, num_classes < 1, C < 1 or any spatial
  /// extent is below kMinSyntheticExtent.
  SyntheticGenerator(std::int64_t n, Shape4 dims, int num_classes, std::uint64_t seed,
                     SyntheticOptions options = {});

  std::int64_t size() const { return n_; }
  int class_of(std::int64_t index) const { return labels_.at(static_cast<std::size_t>(index)); }
  LabeledVolume make(std::int64_t index) const;

 private:
  void add_landmarks(std::vector<float>& signal, const Shape4& d, Rng& rng) const;

  std::int64_t n_;
  Shape4 dims_;
  int num_classes_;
  std::uint64_t seed_;
  SyntheticOptions opt_;
  std::vector<int> labels_;
};

inline constexpr std::int64_t kMinSyntheticExtent = 32;

std::vector<LabeledVolume> generate_synthetic_dataset(std::int64_t n, Shape4 dims, int num_classes,
                                                      std::uint64_t seed, SyntheticOptions options = {});

}  // namespace rubikssl
