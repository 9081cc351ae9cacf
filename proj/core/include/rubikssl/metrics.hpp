#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace rubikssl {

/// Fraction of equal positions. ArgumentError on length mismatch or N == 0.
double accuracy(std::span<const int> pred, std::span<const int> truth);

struct IouResult {
  std::vector<double> per_class;  // NaN for classes absent from both masks
  std::vector<bool> present;
  double miou = 0.0;
};

/// Per-class IoU; classes absent from both masks are excluded from the mean.
IouResult mean_iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth, int num_classes);

}  // namespace rubikssl
