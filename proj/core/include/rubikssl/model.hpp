#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rubikssl/cubeops.hpp"
#include "rubikssl/layers.hpp"
#include "rubikssl/tensor.hpp"

namespace rubikssl {

using Extent3 = std::array<std::int64_t, 3>;

/// One VGG-style stage: `convs` 3x3x3 convolutions with ReLU, then max
/// pooling by `pool` (1,1,1 means no pooling).
struct StageSpec {
  int convs = 1;
  std::int64_t channels = 8;
  Extent3 pool{2, 2, 2};

  friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

struct BackboneConfig {
  std::int64_t in_channels = 1;
  std::vector<StageSpec> stages;

  /// Four stages with 64/128/256/512 channels and 2/2/3/3 convolutions.
  /// Downsampling (8,8,4): z is pooled only twice so 64x64x12 cubes reduce
  /// to 8x8x3. The last stage does not pool.
  static BackboneConfig vgg(std::int64_t in_channels = 1);
  /// Same widths with isotropic (8,8,8) downsampling, for 64^3 cubes.
  static BackboneConfig vgg_iso(std::int64_t in_channels = 1);
  /// Three single-conv stages (8/16/32 channels), each halving every axis.
  static BackboneConfig small(std::int64_t in_channels = 1);

  /// Product of pooling factors per axis.
  Extent3 downsample() const;
  std::int64_t out_channels() const;
  /// Throws ValidationError unless `input` is divisible by downsample().
  Extent3 output_extent(const Extent3& input) const;
  /// Flattened branch embedding size for a given cube.
  std::int64_t feature_dim(const Extent3& cube) const;
  /// Throws ConfigError on empty or non-positive stage specs.
  void validate() const;

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

/// Text form used in config files and checkpoints: "2x64@2,2,2;3x256@1,1,1".
std::string to_string(const BackboneConfig& cfg);
BackboneConfig backbone_from_string(const std::string& text, std::int64_t in_channels);

/// The shared convolutional trunk. Parameters are named enc.s<i>.c<j>.*
/// in every model that embeds it, which is what makes transfer work.
class Encoder {
 public:
  Encoder(ParamStore& store, const BackboneConfig& cfg);

  /// (N, C, X, Y, Z) -> (N, C', X/dx, Y/dy, Z/dz).
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy, bool need_input_grad = false);

  const BackboneConfig& config() const { return cfg_; }

 private:
  struct Stage {
    std::vector<nn::Conv3d> convs;
    std::vector<nn::ReLU> relus;
    nn::MaxPool3d pool;
  };
  BackboneConfig cfg_;
  std::vector<Stage> stages_;
};

/// Raw outputs of the two pretext heads for a batch of B samples.
struct ProxyPrediction {
  Tensor perm_logits;  // (B, K)
  Tensor hor_logits;   // (B, M)
  Tensor ver_logits;   // (B, M)
};

struct ProxyModelSpec {
  int cubes = 8;                 // M
  int perms = 100;               // K
  Extent3 cube{64, 64, 64};      // spatial cube extent
};

/// M branches sharing one Encoder. Branch features are flattened,
/// concatenated in slot order and fed to three linear heads: K-way
/// permutation logits and M horizontal + M vertical rotation logits.
class ProxyModel {
 public:
  ProxyModel(const BackboneConfig& backbone, const ProxyModelSpec& spec, std::uint64_t seed);

  ProxyModel(const ProxyModel&) = delete;
  ProxyModel& operator=(const ProxyModel&) = delete;

  ProxyPrediction forward(std::span<const ProxySample> batch);
  ProxyPrediction forward(std::span<const Cube> cubes);

  /// Encoder features of each cube: (M, feature_dim). No heads.
  Tensor branch_features(std::span<const Cube> cubes);
  /// Heads applied to an already concatenated (B, M * feature_dim) tensor.
  ProxyPrediction heads(const Tensor& concatenated);

  /// Back-propagates head gradients of the last forward() through the heads
  /// and the shared encoder; accumulates into the parameter gradients.
  void backward(const Tensor& d_perm, const Tensor& d_hor, const Tensor& d_ver);

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const BackboneConfig& backbone() const { return encoder_.config(); }
  const ProxyModelSpec& spec() const { return spec_; }
  std::int64_t feature_dim() const { return feature_dim_; }

 private:
  Tensor stack(std::span<const Cube> cubes) const;

  ParamStore store_;
  ProxyModelSpec spec_;
  std::int64_t feature_dim_;
  Encoder encoder_;
  nn::Linear perm_head_;
  nn::Linear hor_head_;
  nn::Linear ver_head_;
  std::vector<std::int64_t> encoded_shape_;
};

/// Encoder over the whole (cropped) volume, global average pooling, then a
/// fresh linear head.
class ClassifierModel {
 public:
  ClassifierModel(const BackboneConfig& backbone, int num_classes, std::uint64_t seed);

  ClassifierModel(const ClassifierModel&) = delete;
  ClassifierModel& operator=(const ClassifierModel&) = delete;

  /// x: (N, C, X, Y, Z) -> (N, num_classes).
  Tensor forward(const Tensor& x);
  void backward(const Tensor& d_logits);

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  int num_classes() const { return num_classes_; }
  const BackboneConfig& backbone() const { return encoder_.config(); }

 private:
  ParamStore store_;
  int num_classes_;
  Encoder encoder_;
  nn::GlobalAvgPool gap_;
  nn::Linear head_;
};

/// Dense upsampling decoder: one 1x1x1 convolution from the encoder features
/// to dx*dy*dz*classes channels followed by a voxel shuffle to full
/// resolution. No transposed convolutions.
class DucSegmenter {
 public:
  DucSegmenter(const BackboneConfig& backbone, int num_classes, std::uint64_t seed);

  DucSegmenter(const DucSegmenter&) = delete;
  DucSegmenter& operator=(const DucSegmenter&) = delete;

  /// x: (N, C, X, Y, Z) -> (N, classes, X, Y, Z). Throws ValidationError when
  /// X, Y, Z are not multiples of the encoder downsampling.
  Tensor forward(const Tensor& x);
  void backward(const Tensor& d_logits);

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  int num_classes() const { return num_classes_; }
  const BackboneConfig& backbone() const { return encoder_.config(); }

 private:
  ParamStore store_;
  int num_classes_;
  Encoder encoder_;
  nn::Conv3d duc_;
};

/// Trainable parameter count of the DUC decoder for a backbone.
std::int64_t duc_decoder_param_count(const BackboneConfig& backbone, int num_classes);

/// Parameter count of the transposed-convolution decoder of matching depth:
/// it mirrors every encoder stage (same number of 3x3x3 convolutions at the
/// stage's width) and inserts a transposed convolution (kernel = pooling
/// factor) wherever the encoder pooled, then a 1x1x1 classifier.
std::int64_t transposed_decoder_param_count(const BackboneConfig& backbone, int num_classes);

}  // namespace rubikssl
