#include "rubikssl/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "rubikssl/errors.hpp"

namespace rubikssl {

double accuracy(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) {
    throw ArgumentError("accuracy: " + std::to_string(pred.size()) + " predictions vs " + std::to_string(truth.size()) +
                        " labels");
  }
  if (pred.empty()) throw ArgumentError("accuracy of an empty sequence");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

IouResult mean_iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth, int num_classes) {
  if (pred.empty() || truth.empty()) throw ArgumentError("mean_iou of empty masks");
  if (pred.size() != truth.size()) throw ArgumentError("mean_iou: masks differ in size");
  if (num_classes < 1) throw ArgumentError("mean_iou needs num_classes >= 1");
  std::vector<std::size_t> inter(static_cast<std::size_t>(num_classes)), uni(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int p = pred[i], t = truth[i];
    if (p >= num_classes || t >= num_classes) throw ArgumentError("mask value >= num_classes");
    if (p == t) {
      ++inter[static_cast<std::size_t>(p)];
      ++uni[static_cast<std::size_t>(p)];
    } else {
      ++uni[static_cast<std::size_t>(p)];
      ++uni[static_cast<std::size_t>(t)];
    }
  }
  IouResult r;
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < num_classes; ++c) {
    const auto u = uni[static_cast<std::size_t>(c)];
    r.present.push_back(u > 0);
    if (u == 0) {
      r.per_class.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const double iou = static_cast<double>(inter[static_cast<std::size_t>(c)]) / static_cast<double>(u);
    r.per_class.push_back(iou);
    sum += iou;
    ++n;
  }
  r.miou = sum / n;
  return r;
}

}  // namespace rubikssl
