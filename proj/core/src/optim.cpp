#include "rubikssl/optim.hpp"

#include <cmath>

#include "rubikssl/errors.hpp"

namespace rubikssl {

const char* to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

Optimizer::Optimizer(ParamStore& store, OptimizerConfig cfg, std::function<bool(const Param&)> trainable)
    : store_(store), cfg_(cfg) {
  if (!(cfg_.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (cfg_.momentum < 0.0 || cfg_.momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  for (std::size_t i = 0; i < store_.size(); ++i) {
    Param& p = store_[i];
    if (trainable && !trainable(p)) continue;
    params_.push_back(&p);
    m_.emplace_back(static_cast<std::size_t>(p.value.numel()), 0.0f);
    if (cfg_.kind == OptimizerKind::adam) v_.emplace_back(static_cast<std::size_t>(p.value.numel()), 0.0f);
  }
}

void Optimizer::step() {
  ++t_;
  const auto lr = static_cast<float>(cfg_.learning_rate);
  const auto wd = static_cast<float>(cfg_.weight_decay);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    float* w = params_[k]->value.data();
    const float* g = params_[k]->grad.data();
    float* m = m_[k].data();
    const std::size_t n = m_[k].size();
    if (cfg_.kind == OptimizerKind::sgd) {
      const auto mu = static_cast<float>(cfg_.momentum);
      for (std::size_t i = 0; i < n; ++i) {
        const float gi = g[i] + wd * w[i];
        m[i] = mu * m[i] + gi;
        w[i] -= lr * m[i];
      }
    } else {
      float* v = v_[k].data();
      const auto b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
      const float c1 = 1.0f - static_cast<float>(std::pow(cfg_.beta1, static_cast<double>(t_)));
      const float c2 = 1.0f - static_cast<float>(std::pow(cfg_.beta2, static_cast<double>(t_)));
      const auto eps = static_cast<float>(cfg_.eps);
      for (std::size_t i = 0; i < n; ++i) {
        const float gi = g[i] + wd * w[i];
        m[i] = b1 * m[i] + (1.0f - b1) * gi;
        v[i] = b2 * v[i] + (1.0f - b2) * gi * gi;
        w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
    }
  }
}

}  // namespace rubikssl
