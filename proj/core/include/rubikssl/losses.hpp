#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rubikssl/tensor.hpp"

namespace rubikssl {

/// Weights of the combined pretraining objective alpha * L_P + beta * L_R.
struct LossWeights {
  double alpha = 0.5;
  double beta = 0.5;

  /// Throws ConfigError unless alpha, beta >= 0 and alpha + beta > 0.
  void validate() const;
};

template <typename Real>
struct LossAndGrad {
  Real loss{};
  std::vector<Real> grad;
};

/// Softmax cross-entropy against a one-hot label, in log-sum-exp form.
/// grad = softmax(logits) - onehot(label). Throws ArgumentError for labels
/// outside [0, K).
template <typename Real>
LossAndGrad<Real> permutation_loss(std::span<const Real> logits, int label);

/// Summed binary cross-entropy over the 2M rotation decisions, evaluated from
/// logits. grad holds the M horizontal entries then the M vertical ones, each
/// sigmoid(logit) - flag. Throws ArgumentError for flags outside {0, 1} or
/// length mismatches.
template <typename Real>
LossAndGrad<Real> rotation_loss(std::span<const Real> hor_logits, std::span<const Real> ver_logits,
                                std::span<const std::uint8_t> g_hor, std::span<const std::uint8_t> g_ver);

inline double total_loss(double lp, double lr, const LossWeights& w = {}) { return w.alpha * lp + w.beta * lr; }

template <typename Real>
std::vector<Real> softmax(std::span<const Real> logits);

/// Mean over the batch of per-row softmax cross-entropy; writes d(mean)/dlogits.
/// logits: (N, K).
double batch_cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor& grad);

/// Mean over the batch of per-row summed BCE; writes d(mean)/dlogits. logits: (N, M).
double batch_binary_cross_entropy(const Tensor& logits, std::span<const std::uint8_t> flags, Tensor& grad);

/// Mean over all voxels of per-voxel softmax cross-entropy. logits are
/// (N, C, X, Y, Z); labels are N*X*Y*Z class ids in the same spatial order.
double voxel_cross_entropy(const Tensor& logits, std::span<const std::uint8_t> labels, Tensor& grad);

}  // namespace rubikssl
