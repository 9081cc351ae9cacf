#include "rubikssl/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "rubikssl/errors.hpp"
#include "rubikssl/rng.hpp"

namespace rubikssl {

SyntheticGenerator::SyntheticGenerator(std::int64_t n, Shape4 dims, int num_classes, std::uint64_t seed,
                                       SyntheticOptions options)
    : n_(n), dims_(dims), num_classes_(num_classes), seed_(seed), opt_(options) {
  if (n < 1) throw ConfigError("synthetic dataset needs n >= 1");
  if (num_classes < 1) throw ConfigError("synthetic dataset needs at least one class");
  if (dims.c < 1) throw ConfigError("synthetic dataset needs at least one channel");
  if (dims.x < kMinSyntheticExtent || dims.y < kMinSyntheticExtent || dims.z < kMinSyntheticExtent) {
    throw ConfigError("synthetic volume " + to_string(dims) + " too small: every spatial extent must be >= " +
                      std::to_string(kMinSyntheticExtent) + " so a 2x2x2 grid with gap fits");
  }
  if (opt_.num_seg_classes < 2 || opt_.num_seg_classes > 255) {
    throw ConfigError("num_seg_classes must be in [2, 255]");
  }
  // Balanced assignment: i % classes, shuffled.
  labels_.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) labels_[static_cast<std::size_t>(i)] = static_cast<int>(i % num_classes);
  Rng rng(derive_seed(seed, {0xc1a55ULL}));
  rng.shuffle(std::span<int>(labels_));
}

void SyntheticGenerator::add_landmarks(std::vector<float>& signal, const Shape4& d, Rng& rng) const {
  if (opt_.landmarks <= 0) return;
  // The layout is a property of the "species", not of the seed: every
  // volume shares it up to jitter.
  Rng layout(0x1a2d3a4bULL);
  const std::int64_t extent[3] = {d.x, d.y, d.z};
  for (int l = 0; l < opt_.landmarks; ++l) {
    double center[3], radius[3];
    for (int a = 0; a < 3; ++a) {
      const double e = static_cast<double>(extent[a]);
      const bool upper = opt_.landmarks == 8 ? ((l >> (2 - a)) & 1) : layout.uniform(0.0, 1.0) < 0.5;
      // Off-centre inside the octant so a flipped cube looks different.
      const double frac = (upper ? 0.5 : 0.0) + layout.uniform(0.12, 0.38);
      center[a] = e * (frac + rng.uniform(-opt_.landmark_jitter, opt_.landmark_jitter));
      radius[a] = std::max(1.5, e * layout.uniform(0.04, 0.12));
    }
    const double amp = (l % 2 == 0 ? 1.0 : -1.0) * opt_.landmark_amplitude * layout.uniform(0.6, 1.0);
    std::int64_t lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(center[a] - radius[a])));
      hi[a] = std::min<std::int64_t>(extent[a] - 1, static_cast<std::int64_t>(std::ceil(center[a] + radius[a])));
    }
    for (std::int64_t x = lo[0]; x <= hi[0]; ++x)
      for (std::int64_t y = lo[1]; y <= hi[1]; ++y)
        for (std::int64_t z = lo[2]; z <= hi[2]; ++z) {
          const double dx = (static_cast<double>(x) - center[0]) / radius[0];
          const double dy = (static_cast<double>(y) - center[1]) / radius[1];
          const double dz = (static_cast<double>(z) - center[2]) / radius[2];
          const double r2 = dx * dx + dy * dy + dz * dz;
          if (r2 <= 1.0) signal[static_cast<std::size_t>((x * d.y + y) * d.z + z)] += static_cast<float>(amp * (1.0 - 0.5 * r2));
        }
  }
}

LabeledVolume SyntheticGenerator::make(std::int64_t index) const {
  if (index < 0 || index >= n_) throw ArgumentError("synthetic index out of range");
  Rng rng(derive_seed(seed_, {static_cast<std::uint64_t>(index)}));
  const int label = class_of(index);
  const auto& d = dims_;

  const double wx = opt_.ramp_scale * opt_.ramp_x * rng.uniform(1.0 - opt_.ramp_jitter, 1.0 + opt_.ramp_jitter);
  const double wy = opt_.ramp_scale * opt_.ramp_y * rng.uniform(1.0 - opt_.ramp_jitter, 1.0 + opt_.ramp_jitter);
  const double wz = opt_.ramp_scale * opt_.ramp_z * rng.uniform(1.0 - opt_.ramp_jitter, 1.0 + opt_.ramp_jitter);

  // Signal shared by all channels: ramp + blobs.
  std::vector<float> signal(static_cast<std::size_t>(d.spatial()));
  for (std::int64_t x = 0; x < d.x; ++x)
    for (std::int64_t y = 0; y < d.y; ++y)
      for (std::int64_t z = 0; z < d.z; ++z) {
        const double v = wx * static_cast<double>(x) / static_cast<double>(d.x) +
                         wy * static_cast<double>(y) / static_cast<double>(d.y) +
                         wz * static_cast<double>(z) / static_cast<double>(d.z);
        signal[static_cast<std::size_t>((x * d.y + y) * d.z + z)] = static_cast<float>(v);
      }

  Rng landmark_rng(derive_seed(seed_, {static_cast<std::uint64_t>(index), 1}));
  add_landmarks(signal, d, landmark_rng);

  Mask mask{d.x, d.y, d.z, std::vector<std::uint8_t>(static_cast<std::size_t>(d.spatial()), 0)};
  const int blob_count = 1 + label;
  const double amplitude = (label % 2 == 0 ? 1.0 : -1.0) * opt_.blob_amplitude;
  const std::int64_t extent[3] = {d.x, d.y, d.z};
  for (int b = 0; b < blob_count; ++b) {
    double radius[3];
    double center[3];
    for (int a = 0; a < 3; ++a) {
      const double e = static_cast<double>(extent[a]);
      radius[a] = std::max(2.0, e * rng.uniform(opt_.blob_radius_min, opt_.blob_radius_max));
      center[a] = rng.uniform(radius[a], e - 1.0 - radius[a]);
    }
    std::int64_t lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(center[a] - radius[a])));
      hi[a] = std::min<std::int64_t>(extent[a] - 1, static_cast<std::int64_t>(std::ceil(center[a] + radius[a])));
    }
    for (std::int64_t x = lo[0]; x <= hi[0]; ++x)
      for (std::int64_t y = lo[1]; y <= hi[1]; ++y)
        for (std::int64_t z = lo[2]; z <= hi[2]; ++z) {
          const double dx = (static_cast<double>(x) - center[0]) / radius[0];
          const double dy = (static_cast<double>(y) - center[1]) / radius[1];
          const double dz = (static_cast<double>(z) - center[2]) / radius[2];
          const double r2 = dx * dx + dy * dy + dz * dz;
          if (r2 > 1.0) continue;
          const auto i = static_cast<std::size_t>((x * d.y + y) * d.z + z);
          signal[i] += static_cast<float>(amplitude * (1.0 - 0.5 * r2));
          mask.labels[i] = 1;
        }
  }

  std::vector<float> data(static_cast<std::size_t>(d.numel()));
  std::vector<std::string> names;
  for (std::int64_t c = 0; c < d.c; ++c) {
    // Modalities differ by an affine intensity map, as scanner channels do.
    const double offset = 10.0 * static_cast<double>(c);
    const double scale = 1.0 + 0.5 * static_cast<double>(c);
    float* dst = data.data() + c * d.spatial();
    for (std::size_t i = 0; i < signal.size(); ++i) {
      dst[i] = static_cast<float>(offset + scale * signal[i] + opt_.noise_sigma * rng.normal());
    }
    names.push_back("synth" + std::to_string(c));
  }

  LabeledVolume out;
  out.volume = Volume(d, std::move(data), {1.0, 1.0, 1.0}, std::move(names));
  out.class_label = label;
  out.seg_mask = std::move(mask);
  return out;
}

std::vector<LabeledVolume> generate_synthetic_dataset(std::int64_t n, Shape4 dims, int num_classes,
                                                      std::uint64_t seed, SyntheticOptions options) {
  const SyntheticGenerator gen(n, dims, num_classes, seed, options);
  std::vector<LabeledVolume> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out.push_back(gen.make(i));
  return out;
}

}  // namespace rubikssl
