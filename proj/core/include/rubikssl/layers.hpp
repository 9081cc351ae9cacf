#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rubikssl/tensor.hpp"

namespace rubikssl {

/// Which part of a model a parameter belongs to; drives selective transfer.
enum class Role { encoder, proxy_head, cls_head, seg_decoder };

const char* to_string(Role r);
/// Throws ArgumentError for unknown names.
Role role_from_string(const std::string& s);

struct Param {
  std::string name;
  Role role = Role::encoder;
  Tensor value;
  Tensor grad;
  std::int64_t fan_in = 1;
};

/// Owns the parameters of one model. References handed out stay valid for
/// the lifetime of the store; iteration follows registration order.
class ParamStore {
 public:
  Param& add(std::string name, Role role, std::vector<std::int64_t> shape, std::int64_t fan_in);
  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;
  Param& at(const std::string& name);

  std::size_t size() const { return params_.size(); }
  Param& operator[](std::size_t i) { return *params_[i]; }
  const Param& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad();
  std::int64_t count(Role role) const;
  std::int64_t count() const;

 private:
  std::vector<std::unique_ptr<Param>> params_;
};

/// Seeded fan-in-scaled uniform init. Weights of conv layers (rank 5) use the
/// ReLU gain sqrt(6 / fan_in), linear layers 1 / sqrt(fan_in); biases start
/// at zero. Each parameter's stream depends only on (seed, name).
void init_params(ParamStore& store, std::uint64_t seed);

namespace nn {

/// Volumetric convolution, stride 1, zero "same" padding, odd cubic kernel.
/// Input and output are (N, C, X, Y, Z).
class Conv3d {
 public:
  Conv3d(ParamStore& store, const std::string& name, Role role, std::int64_t in_channels, std::int64_t out_channels,
         std::int64_t kernel);

  Tensor forward(const Tensor& x);
  /// Accumulates weight/bias gradients. Returns dL/dx when need_input_grad.
  Tensor backward(const Tensor& dy, bool need_input_grad = true);

  std::int64_t in_channels() const { return cin_; }
  std::int64_t out_channels() const { return cout_; }

 private:
  Param* weight_;
  Param* bias_;
  std::int64_t cin_, cout_, k_;
  Tensor input_;
};

class ReLU {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor output_;
};

/// Non-overlapping max pooling with per-axis factors that must divide the input.
class MaxPool3d {
 public:
  explicit MaxPool3d(std::array<std::int64_t, 3> factors) : f_(factors) {}
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;
  bool is_identity() const { return f_[0] == 1 && f_[1] == 1 && f_[2] == 1; }

 private:
  std::array<std::int64_t, 3> f_;
  std::vector<std::int64_t> input_shape_;
  std::vector<std::int32_t> argmax_;
};

/// y = x W^T + b with x of shape (N, in).
class Linear {
 public:
  Linear(ParamStore& store, const std::string& name, Role role, std::int64_t in, std::int64_t out);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy, bool need_input_grad = true);

  std::int64_t in_features() const { return in_; }
  std::int64_t out_features() const { return out_; }

 private:
  Param* weight_;
  Param* bias_;
  std::int64_t in_, out_;
  Tensor input_;
};

/// (N, C, X, Y, Z) -> (N, C) mean over space.
class GlobalAvgPool {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  std::vector<std::int64_t> input_shape_;
};

}  // namespace nn

/// Rearranges (N, C*fx*fy*fz, X, Y, Z) into (N, C, X*fx, Y*fy, Z*fz). Channel
/// c*fx*fy*fz + (i*fy + j)*fz + k lands on sub-voxel (i, j, k) of each cell.
Tensor voxel_shuffle(const Tensor& x, std::array<std::int64_t, 3> factors);
/// Exact inverse of voxel_shuffle (and its adjoint, used for the gradient).
Tensor voxel_unshuffle(const Tensor& y, std::array<std::int64_t, 3> factors);

}  // namespace rubikssl
