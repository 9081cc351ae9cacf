#include "rubikssl/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "rubikssl/errors.hpp"

namespace rubikssl {

std::int64_t shape_numel(std::span<const std::int64_t> shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ValidationError("negative tensor extent");
    n *= d;
  }
  return n;
}

std::string shape_string(std::span<const std::int64_t> shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ")";
  return os.str();
}

Tensor::Tensor(std::vector<std::int64_t> shape, float fill)
    : shape_(std::move(shape)), values_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(std::vector<std::int64_t> shape, std::span<const float> values)
    : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  if (shape_numel(shape_) != static_cast<std::int64_t>(values_.size())) {
    throw ValidationError("tensor of shape " + shape_string(shape_) + " given " + std::to_string(values_.size()) +
                          " values");
  }
}

void Tensor::fill(float v) { std::fill(values_.begin(), values_.end(), v); }

void Tensor::reshape(std::vector<std::int64_t> shape) {
  if (shape_numel(shape) != numel()) {
    throw ValidationError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
}

Tensor Tensor::reshaped(std::vector<std::int64_t> shape) const {
  Tensor t = *this;
  t.reshape(std::move(shape));
  return t;
}

}  // namespace rubikssl
