#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rubikssl/layers.hpp"

namespace rubikssl {

enum class OptimizerKind { sgd, adam };
const char* to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Updates every parameter accepted by `trainable` (all when empty) from its
/// accumulated gradient. Frozen parameters are never written.
class Optimizer {
 public:
  Optimizer(ParamStore& store, OptimizerConfig cfg, std::function<bool(const Param&)> trainable = {});

  void step();
  long steps() const { return t_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  ParamStore& store_;
  OptimizerConfig cfg_;
  std::vector<Param*> params_;
  std::vector<std::vector<float>> m_, v_;
  long t_ = 0;
};

}  // namespace rubikssl
