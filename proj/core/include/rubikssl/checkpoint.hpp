#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "rubikssl/layers.hpp"
#include "rubikssl/model.hpp"

namespace rubikssl {

struct TensorRecord {
  std::string name;
  Role role = Role::encoder;
  std::vector<std::int64_t> shape;
  std::vector<float> values;

  friend bool operator==(const TensorRecord&, const TensorRecord&) = default;
};

struct CheckpointMeta {
  BackboneConfig backbone;
  std::string bank_hash;  // empty for target-task checkpoints
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  std::string kind;       // "proxy", "classifier" or "segmenter"
  int num_classes = 0;    // classes of the task head, when any
  int cubes = 0;          // proxy only: M
  int perms = 0;          // proxy only: K
  Extent3 cube{0, 0, 0};  // proxy only

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct ModelCheckpoint {
  CheckpointMeta meta;
  std::vector<TensorRecord> params;  // registration order

  const TensorRecord* find(const std::string& name) const;
  friend bool operator==(const ModelCheckpoint&, const ModelCheckpoint&) = default;
};

/// Copies every parameter value of a model.
ModelCheckpoint snapshot(const ParamStore& store, CheckpointMeta meta);

/// RC01: one JSON header line {"magic","meta","tensors":{name:{shape,role,
/// offset,nbytes}}} followed by the concatenated little-endian f32 payloads.
void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);

/// Throws FormatError on a bad header and CorruptionError when the payload
/// does not match the tensor table.
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

struct TransferReport {
  std::vector<std::string> initialized;  // copied from the checkpoint
  std::vector<std::string> fresh;        // kept their current values
};

/// Copies the checkpoint tensors whose role is in `roles` into `target`.
/// Every target parameter with a filtered role must exist in the checkpoint
/// with the same shape. All checks run before the first write, so on
/// TransferError the target is untouched.
TransferReport transfer(const ModelCheckpoint& ckpt, ParamStore& target, const std::set<Role>& roles);

/// load_checkpoint + transfer; container errors surface as TransferError.
TransferReport load_checkpoint(const std::filesystem::path& path, ParamStore& target, const std::set<Role>& roles);

}  // namespace rubikssl
