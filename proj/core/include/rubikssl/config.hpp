#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rubikssl/cubeops.hpp"
#include "rubikssl/losses.hpp"
#include "rubikssl/model.hpp"
#include "rubikssl/optim.hpp"

namespace rubikssl {

/// Flat key -> value map; keys are dotted paths such as "optim.lr".
using ConfigMap = std::map<std::string, std::string>;

/// Grammar, one entry per line:
///   key = value      # trailing comments allowed
/// Blank lines and lines starting with '#' are ignored. A repeated key is an
/// error. ConfigError messages carry the line number.
ConfigMap parse_config(const std::string& text, const std::string& origin = "<text>");
ConfigMap load_config(const std::filesystem::path& path);

/// "key=value" strings, as given to --set.
ConfigMap parse_overrides(const std::vector<std::string>& items);

/// Later layers win.
ConfigMap merge(std::initializer_list<const ConfigMap*> layers);

std::string render_config(const ConfigMap& m);
/// FNV-1a over the sorted "key=value\n" lines; independent of file order.
std::string config_hash(const ConfigMap& m);

enum class Phase { pretrain, finetune_cls, finetune_seg };
const char* to_string(Phase p);
Phase phase_from_string(const std::string& s);

struct TrainConfig {
  Phase phase = Phase::pretrain;
  std::uint64_t seed = 0;
  bool deterministic = false;

  std::string backbone = "small";
  std::int64_t in_channels = 1;

  // Pretraining.
  GridSpec grid;
  int perms = 100;  // K
  double rot_prob = 0.5;
  LossWeights loss;

  // Fine-tuning.
  int num_classes = 2;
  std::array<std::int64_t, 3> input{0, 0, 0};  // center crop; 0 keeps the volume extent
  std::string init = "scratch";
  bool freeze_encoder = false;

  OptimizerConfig optim;
  int batch_size = 8;
  int epochs = 50;
  int eval_every = 1;  // epochs
  int workers = 0;     // proxy producer threads; 0 generates on the consumer
  double split_ratio = 0.8;
  std::uint64_t split_seed = 0;  // fixed across runs so arms see the same split

  int cubes() const { return grid.cube_count(); }
  BackboneConfig backbone_config() const { return backbone_from_string(backbone, in_channels); }

  /// Checks every field; ConfigError names the offending key.
  void validate() const;
};

/// Defaults for a phase (fine-tuning phases default to 30 epochs).
TrainConfig default_config(Phase phase);

/// Unknown keys and unparsable values raise ConfigError naming the key.
TrainConfig config_from_map(const ConfigMap& m);
/// Every field materialized; config_from_map(config_to_map(c)) == c.
ConfigMap config_to_map(const TrainConfig& c);

}  // namespace rubikssl
