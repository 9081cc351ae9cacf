#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rubikssl {

/// Extent of a (C, X, Y, Z) array; Z varies fastest in memory.
struct Shape4 {
  std::int64_t c = 1;
  std::int64_t x = 1;
  std::int64_t y = 1;
  std::int64_t z = 1;

  std::int64_t spatial() const { return x * y * z; }
  std::int64_t numel() const { return c * spatial(); }
  std::int64_t index(std::int64_t ci, std::int64_t xi, std::int64_t yi, std::int64_t zi) const {
    return ((ci * x + xi) * y + yi) * z + zi;
  }
  friend bool operator==(const Shape4&, const Shape4&) = default;
};

std::string to_string(const Shape4& s);

/// A dense multi-channel scalar field. Immutable after construction.
class Volume {
 public:
  Volume() = default;
  /// Throws ValidationError when the shape is empty, the data size does not
  /// match, spacing is non-positive or the modality list has the wrong size.
  /// An empty modality list is filled with "ch0", "ch1", ...
  Volume(Shape4 shape, std::vector<float> data, std::array<double, 3> spacing = {1.0, 1.0, 1.0},
         std::vector<std::string> modality_names = {});

  const Shape4& shape() const { return shape_; }
  std::span<const float> data() const { return data_; }
  std::span<const float> channel(std::int64_t c) const {
    return std::span<const float>(data_).subspan(static_cast<std::size_t>(c * shape_.spatial()),
                                                 static_cast<std::size_t>(shape_.spatial()));
  }
  float at(std::int64_t c, std::int64_t x, std::int64_t y, std::int64_t z) const {
    return data_[static_cast<std::size_t>(shape_.index(c, x, y, z))];
  }
  const std::array<double, 3>& spacing() const { return spacing_; }
  const std::vector<std::string>& modality_names() const { return modalities_; }

  /// Index of the first non-finite voxel, if any.
  std::optional<std::int64_t> first_non_finite() const;

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  Shape4 shape_{};
  std::vector<float> data_;
  std::array<double, 3> spacing_{1.0, 1.0, 1.0};
  std::vector<std::string> modalities_;
};

/// Integer label map over the spatial grid of a Volume.
struct Mask {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;
  std::vector<std::uint8_t> labels;

  std::int64_t numel() const { return x * y * z; }
  friend bool operator==(const Mask&, const Mask&) = default;
};

struct LabeledVolume {
  Volume volume;
  std::optional<int> class_label;
  std::optional<Mask> seg_mask;
};

/// Reads an RV01 container with dtype f32.
Volume load_volume(const std::filesystem::path& path);

/// Writes an RV01 container. Refuses (ValidationError) to write non-finite
/// data; nothing is created in that case.
void save_volume(const Volume& v, const std::filesystem::path& path);

/// Reads an RV01 container with dtype u8 and shape [1, X, Y, Z].
Mask load_mask(const std::filesystem::path& path);
void save_mask(const Mask& m, const std::filesystem::path& path);

/// Per-channel centering by the mean and scaling by the largest absolute
/// deviation, so every output lies in [-1, 1]. Constant channels map to 0.
Volume normalize_intensity(const Volume& v);

inline constexpr double kNormalizeEpsilon = 1e-8;

/// Center crop (or zero pad, when the target is larger) to a spatial shape.
Volume center_crop(const Volume& v, std::int64_t x, std::int64_t y, std::int64_t z);
Mask center_crop(const Mask& m, std::int64_t x, std::int64_t y, std::int64_t z);

}  // namespace rubikssl
