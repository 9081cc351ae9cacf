#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rubikssl/trainer.hpp"

namespace rubikssl {

/// One initialization strategy. Arms without a pretrain config start from
/// scratch; the others pretrain first and fine-tune from that encoder.
struct ArmSpec {
  std::string name;
  TrainConfig finetune;
  std::optional<TrainConfig> pretrain;
};

/// scratch, ordering (beta = 0) and rubik (the given loss weights).
std::vector<ArmSpec> standard_arms(const TrainConfig& pretrain, const TrainConfig& finetune,
                                   const std::vector<std::string>& names);

struct ComparisonRow {
  std::string arm;
  std::string seed;  // a seed, "mean" or "std"
  std::string metric;
  double value = 0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;

  /// Header "arm,seed,metric,value".
  std::string to_csv() const;
  double mean(const std::string& arm) const;
  double stddev(const std::string& arm) const;
};

struct CompareData {
  const Dataset* pretrain_train = nullptr;
  const Dataset* pretrain_test = nullptr;
  const Dataset* finetune_train = nullptr;
  const Dataset* finetune_test = nullptr;
};

/// Runs every arm once per seed. Throws ConfigError when arms differ in
/// anything but their initialization (phase, budget, optimizer, model) or
/// when fewer than 3 seeds are given.
ComparisonTable compare_strategies(const std::vector<ArmSpec>& arms, const std::vector<std::uint64_t>& seeds,
                                   const CompareData& data, const PermutationBank& bank,
                                   const TrainHooks& hooks = {});

}  // namespace rubikssl
