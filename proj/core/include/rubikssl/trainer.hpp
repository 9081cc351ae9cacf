#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rubikssl/checkpoint.hpp"
#include "rubikssl/config.hpp"
#include "rubikssl/dataset.hpp"
#include "rubikssl/metrics.hpp"
#include "rubikssl/model.hpp"
#include "rubikssl/permbank.hpp"

namespace rubikssl {

/// One JSON object per evaluation point.
struct MetricsReport {
  std::string config_hash;
  std::vector<nlohmann::ordered_json> records;

  std::string to_jsonl() const;
  void save(const std::filesystem::path& path) const;
};

/// Progress lines go here; nullptr silences them.
struct TrainHooks {
  std::ostream* log = nullptr;
  /// Called after every optimizer step with (epoch, step, total loss).
  std::function<void(int, long, double)> on_step;
};

struct ProxyEval {
  double loss = 0, loss_perm = 0, loss_rot = 0;
  double ordering_acc = 0, orientation_acc = 0;
};

/// Proxy samples for a dataset, one per (epoch, position). Every sample is
/// a pure function of (seed, epoch, index), so workers may build them in any
/// order.
class ProxySampler {
 public:
  ProxySampler(const Dataset& data, const GridSpec& grid, const PermutationBank& bank, double rot_prob,
               std::uint64_t seed);
  /// Volume visiting order of an epoch.
  std::vector<std::size_t> order(int epoch) const;
  ProxySample sample(int epoch, std::size_t position, std::size_t volume) const;
  /// Fixed held-out samples: one per volume, identical across epochs.
  ProxySample eval_sample(std::size_t volume) const;

 private:
  const Dataset& data_;
  GridSpec grid_;
  const PermutationBank& bank_;
  double rot_prob_;
  std::uint64_t seed_;
};

ProxyEval evaluate_proxy(ProxyModel& model, std::span<const ProxySample> samples, const LossWeights& w, int batch_size);

struct PretrainResult {
  ModelCheckpoint checkpoint;
  MetricsReport report;
};

/// Trains a ProxyModel on samples drawn from `train`; evaluates on fixed
/// samples of `test` before the first update (epoch 0) and every eval_every
/// epochs. All configuration errors surface before the first step.
PretrainResult pretrain(const TrainConfig& cfg, const Dataset& train, const Dataset& test, const PermutationBank& bank,
                        const TrainHooks& hooks = {});

/// Loss trace of `steps` optimizer steps on one fixed batch.
std::vector<double> overfit_one_batch(ProxyModel& model, std::span<const ProxySample> batch, const LossWeights& w,
                                      const OptimizerConfig& opt, int steps);

struct FinetuneResult {
  ModelCheckpoint initial;  // parameters right before the first update
  ModelCheckpoint checkpoint;
  MetricsReport report;
  TransferReport transfer;
  double final_metric = 0;  // test ACC (cls) or mIoU (seg)
};

/// Builds the target model with cfg.seed, copies the encoder when cfg.init
/// names a checkpoint, trains with cross-entropy and evaluates on `test`.
FinetuneResult finetune(const TrainConfig& cfg, const Dataset& train, const Dataset& test,
                        const TrainHooks& hooks = {});
/// Same, with an in-memory checkpoint in place of cfg.init.
FinetuneResult finetune(const TrainConfig& cfg, const Dataset& train, const Dataset& test,
                        const ModelCheckpoint* init, const TrainHooks& hooks = {});

/// Batched network input: each volume center-cropped to `input` (0 keeps the
/// volume extent) and stacked to (N, C, X, Y, Z).
Tensor stack_volumes(const Dataset& data, std::span<const std::size_t> idx, const std::array<std::int64_t, 3>& input);

struct TaskEval {
  double loss = 0;
  double acc = 0;        // classification
  IouResult iou;         // segmentation
  std::vector<int> predictions;
};

TaskEval evaluate_classifier(ClassifierModel& model, const Dataset& data, const std::array<std::int64_t, 3>& input,
                             int batch_size);
TaskEval evaluate_segmenter(DucSegmenter& model, const Dataset& data, const std::array<std::int64_t, 3>& input,
                            int batch_size);

/// Rebuilds a model of the checkpoint's kind, loads all of its parameters and
/// evaluates it on `data`. Returns one metrics record.
nlohmann::ordered_json evaluate_checkpoint(const ModelCheckpoint& ckpt, const Dataset& data,
                                           const PermutationBank* bank, const TrainConfig& cfg);

}  // namespace rubikssl
