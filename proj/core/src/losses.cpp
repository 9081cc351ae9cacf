#include "rubikssl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rubikssl/errors.hpp"

namespace rubikssl {

void LossWeights::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(alpha + beta > 0.0)) {
    throw ConfigError("loss weights need alpha >= 0, beta >= 0 and alpha + beta > 0 (got alpha=" +
                      std::to_string(alpha) + ", beta=" + std::to_string(beta) + ")");
  }
}

namespace {

// log(1 + exp(-|s|)) + max(s, 0) - s * g, the BCE of sigmoid(s) against g.
template <typename Real>
Real bce_with_logit(Real s, Real g) {
  using std::abs, std::exp, std::log1p;
  return std::max(s, Real(0)) - s * g + log1p(exp(-abs(s)));
}

template <typename Real>
Real sigmoid(Real s) {
  using std::exp;
  if (s >= 0) return Real(1) / (Real(1) + exp(-s));
  const Real e = exp(s);
  return e / (Real(1) + e);
}

// Writes softmax into out, returns log-sum-exp.
template <typename Real>
Real softmax_into(const Real* logits, std::size_t k, Real* out) {
  using std::exp, std::log;
  const Real m = *std::max_element(logits, logits + k);
  Real sum = 0;
  for (std::size_t j = 0; j < k; ++j) {
    out[j] = exp(logits[j] - m);
    sum += out[j];
  }
  for (std::size_t j = 0; j < k; ++j) out[j] /= sum;
  return m + log(sum);
}

}  // namespace

template <typename Real>
std::vector<Real> softmax(std::span<const Real> logits) {
  std::vector<Real> p(logits.size());
  if (!logits.empty()) softmax_into(logits.data(), logits.size(), p.data());
  return p;
}

template <typename Real>
LossAndGrad<Real> permutation_loss(std::span<const Real> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw ArgumentError("permutation label " + std::to_string(label) + " outside [0, " +
                        std::to_string(logits.size()) + ")");
  }
  LossAndGrad<Real> out;
  out.grad.resize(logits.size());
  const Real lse = softmax_into(logits.data(), logits.size(), out.grad.data());
  out.loss = lse - logits[static_cast<std::size_t>(label)];
  out.grad[static_cast<std::size_t>(label)] -= Real(1);
  return out;
}

template <typename Real>
LossAndGrad<Real> rotation_loss(std::span<const Real> hor_logits, std::span<const Real> ver_logits,
                                std::span<const std::uint8_t> g_hor, std::span<const std::uint8_t> g_ver) {
  const std::size_t m = hor_logits.size();
  if (ver_logits.size() != m || g_hor.size() != m || g_ver.size() != m) {
    throw ArgumentError("rotation_loss: logits and flags must all have length M");
  }
  LossAndGrad<Real> out;
  out.grad.resize(2 * m);
  auto accumulate = [&](std::span<const Real> s, std::span<const std::uint8_t> g, std::size_t offset) {
    for (std::size_t i = 0; i < m; ++i) {
      if (g[i] > 1) throw ArgumentError("rotation flags must be 0 or 1");
      const Real gi = static_cast<Real>(g[i]);
      out.loss += bce_with_logit(s[i], gi);
      out.grad[offset + i] = sigmoid(s[i]) - gi;
    }
  };
  accumulate(hor_logits, g_hor, 0);
  accumulate(ver_logits, g_ver, m);
  return out;
}

template std::vector<float> softmax<float>(std::span<const float>);
template std::vector<double> softmax<double>(std::span<const double>);
template LossAndGrad<float> permutation_loss<float>(std::span<const float>, int);
template LossAndGrad<double> permutation_loss<double>(std::span<const double>, int);
template LossAndGrad<float> rotation_loss<float>(std::span<const float>, std::span<const float>,
                                                 std::span<const std::uint8_t>, std::span<const std::uint8_t>);
template LossAndGrad<double> rotation_loss<double>(std::span<const double>, std::span<const double>,
                                                   std::span<const std::uint8_t>, std::span<const std::uint8_t>);

double batch_cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor& grad) {
  if (logits.rank() != 2 || logits.dim(0) != static_cast<std::int64_t>(labels.size())) {
    throw ArgumentError("batch_cross_entropy: logits " + shape_string(logits.shape()) + " vs " +
                        std::to_string(labels.size()) + " labels");
  }
  const std::int64_t n = logits.dim(0), k = logits.dim(1);
  grad = Tensor(logits.shape());
  double total = 0.0;
  std::vector<double> row(static_cast<std::size_t>(k));
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < k; ++j) row[static_cast<std::size_t>(j)] = logits[i * k + j];
    const auto lg = permutation_loss<double>(row, labels[static_cast<std::size_t>(i)]);
    total += lg.loss;
    for (std::int64_t j = 0; j < k; ++j) grad[i * k + j] = static_cast<float>(lg.grad[static_cast<std::size_t>(j)] / n);
  }
  return total / static_cast<double>(n);
}

double batch_binary_cross_entropy(const Tensor& logits, std::span<const std::uint8_t> flags, Tensor& grad) {
  if (logits.rank() != 2 || logits.numel() != static_cast<std::int64_t>(flags.size())) {
    throw ArgumentError("batch_binary_cross_entropy: logits " + shape_string(logits.shape()) + " vs " +
                        std::to_string(flags.size()) + " flags");
  }
  const std::int64_t n = logits.dim(0);
  grad = Tensor(logits.shape());
  double total = 0.0;
  for (std::int64_t i = 0; i < logits.numel(); ++i) {
    const auto f = flags[static_cast<std::size_t>(i)];
    if (f > 1) throw ArgumentError("rotation flags must be 0 or 1");
    const double s = logits[i];
    total += bce_with_logit(s, static_cast<double>(f));
    grad[i] = static_cast<float>((sigmoid(s) - f) / static_cast<double>(n));
  }
  return total / static_cast<double>(n);
}

double voxel_cross_entropy(const Tensor& logits, std::span<const std::uint8_t> labels, Tensor& grad) {
  if (logits.rank() != 5) throw ArgumentError("voxel_cross_entropy expects (N, C, X, Y, Z) logits");
  const std::int64_t n = logits.dim(0), c = logits.dim(1);
  const std::int64_t p = logits.dim(2) * logits.dim(3) * logits.dim(4);
  if (static_cast<std::int64_t>(labels.size()) != n * p) {
    throw ArgumentError("voxel_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(n * p) + " voxels");
  }
  grad = Tensor(logits.shape());
  const double inv = 1.0 / static_cast<double>(n * p);
  double total = 0.0;
  std::vector<double> s(static_cast<std::size_t>(c)), prob(static_cast<std::size_t>(c));
  for (std::int64_t ni = 0; ni < n; ++ni) {
    const float* base = logits.data() + ni * c * p;
    float* gbase = grad.data() + ni * c * p;
    for (std::int64_t v = 0; v < p; ++v) {
      const int label = labels[static_cast<std::size_t>(ni * p + v)];
      if (label >= c) throw ArgumentError("voxel label " + std::to_string(label) + " >= " + std::to_string(c));
      for (std::int64_t j = 0; j < c; ++j) s[static_cast<std::size_t>(j)] = base[j * p + v];
      const double lse = softmax_into(s.data(), s.size(), prob.data());
      total += lse - s[static_cast<std::size_t>(label)];
      prob[static_cast<std::size_t>(label)] -= 1.0;
      for (std::int64_t j = 0; j < c; ++j) gbase[j * p + v] = static_cast<float>(prob[static_cast<std::size_t>(j)] * inv);
    }
  }
  return total * inv;
}

}  // namespace rubikssl
