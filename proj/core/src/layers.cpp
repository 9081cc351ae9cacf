#include "rubikssl/layers.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "rubikssl/errors.hpp"
#include "rubikssl/hash.hpp"
#include "rubikssl/rng.hpp"

namespace rubikssl {

const char* to_string(Role r) {
  switch (r) {
    case Role::encoder:
      return "encoder";
    case Role::proxy_head:
      return "proxy_head";
    case Role::cls_head:
      return "cls_head";
    case Role::seg_decoder:
      return "seg_decoder";
  }
  return "encoder";
}

Role role_from_string(const std::string& s) {
  if (s == "encoder") return Role::encoder;
  if (s == "proxy_head") return Role::proxy_head;
  if (s == "cls_head") return Role::cls_head;
  if (s == "seg_decoder") return Role::seg_decoder;
  throw ArgumentError("unknown parameter role '" + s + "'");
}

Param& ParamStore::add(std::string name, Role role, std::vector<std::int64_t> shape, std::int64_t fan_in) {
  if (find(name)) throw ArgumentError("duplicate parameter name " + name);
  auto p = std::make_unique<Param>();
  p->name = std::move(name);
  p->role = role;
  p->value = Tensor(shape);
  p->grad = Tensor(std::move(shape));
  p->fan_in = fan_in;
  params_.push_back(std::move(p));
  return *params_.back();
}

Param* ParamStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Param* ParamStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

Param& ParamStore::at(const std::string& name) {
  if (auto* p = find(name)) return *p;
  throw ArgumentError("no parameter named " + name);
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad.fill(0.0f);
}

std::int64_t ParamStore::count(Role role) const {
  std::int64_t n = 0;
  for (const auto& p : params_)
    if (p->role == role) n += p->value.numel();
  return n;
}

std::int64_t ParamStore::count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p->value.numel();
  return n;
}

void init_params(ParamStore& store, std::uint64_t seed) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    Param& p = store[i];
    const bool is_bias = p.name.size() >= 5 && p.name.compare(p.name.size() - 5, 5, ".bias") == 0;
    if (is_bias) {
      p.value.fill(0.0f);
      continue;
    }
    const double fan_in = static_cast<double>(std::max<std::int64_t>(1, p.fan_in));
    const double bound = p.value.rank() == 5 ? std::sqrt(6.0 / fan_in) : 1.0 / std::sqrt(fan_in);
    Rng rng(derive_seed(seed, {fnv1a64(p.name)}));
    for (auto& v : p.value.values()) v = static_cast<float>(rng.uniform(-bound, bound));
  }
}

namespace nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

constexpr std::int64_t kColumnBudget = 1 << 22;  // floats per im2col chunk

struct Geometry {
  std::int64_t n, c, x, y, z;
  std::int64_t spatial() const { return x * y * z; }
};

Geometry geometry_of(const Tensor& t, const char* who) {
  if (t.rank() != 5) throw ValidationError(std::string(who) + " expects a rank-5 tensor, got " + shape_string(t.shape()));
  return {t.dim(0), t.dim(1), t.dim(2), t.dim(3), t.dim(4)};
}

// Unfolds x-slices [x0, x1) of one sample into rows (c, a, b, e), columns
// (x, y, z) of the output grid.
void im2col(const float* in, const Geometry& g, std::int64_t k, std::int64_t x0, std::int64_t x1, float* col) {
  const std::int64_t pad = k / 2;
  const std::int64_t cols = (x1 - x0) * g.y * g.z;
  for (std::int64_t c = 0; c < g.c; ++c)
    for (std::int64_t a = 0; a < k; ++a)
      for (std::int64_t b = 0; b < k; ++b)
        for (std::int64_t e = 0; e < k; ++e) {
          float* row = col + (((c * k + a) * k + b) * k + e) * cols;
          const std::int64_t zlo = std::max<std::int64_t>(0, pad - e);
          const std::int64_t zhi = std::min<std::int64_t>(g.z, g.z + pad - e);
          for (std::int64_t x = x0; x < x1; ++x) {
            const std::int64_t sx = x + a - pad;
            for (std::int64_t y = 0; y < g.y; ++y) {
              float* dst = row + ((x - x0) * g.y + y) * g.z;
              const std::int64_t sy = y + b - pad;
              if (sx < 0 || sx >= g.x || sy < 0 || sy >= g.y || zlo >= zhi) {
                std::fill(dst, dst + g.z, 0.0f);
                continue;
              }
              const float* src = in + ((c * g.x + sx) * g.y + sy) * g.z + (e - pad);
              std::fill(dst, dst + zlo, 0.0f);
              std::copy(src + zlo, src + zhi, dst + zlo);
              std::fill(dst + zhi, dst + g.z, 0.0f);
            }
          }
        }
}

// Adjoint of im2col: scatters column gradients back onto the input grid.
void col2im(const float* col, const Geometry& g, std::int64_t k, std::int64_t x0, std::int64_t x1, float* out) {
  const std::int64_t pad = k / 2;
  const std::int64_t cols = (x1 - x0) * g.y * g.z;
  for (std::int64_t c = 0; c < g.c; ++c)
    for (std::int64_t a = 0; a < k; ++a)
      for (std::int64_t b = 0; b < k; ++b)
        for (std::int64_t e = 0; e < k; ++e) {
          const float* row = col + (((c * k + a) * k + b) * k + e) * cols;
          const std::int64_t zlo = std::max<std::int64_t>(0, pad - e);
          const std::int64_t zhi = std::min<std::int64_t>(g.z, g.z + pad - e);
          for (std::int64_t x = x0; x < x1; ++x) {
            const std::int64_t sx = x + a - pad;
            if (sx < 0 || sx >= g.x) continue;
            for (std::int64_t y = 0; y < g.y; ++y) {
              const std::int64_t sy = y + b - pad;
              if (sy < 0 || sy >= g.y) continue;
              const float* src = row + ((x - x0) * g.y + y) * g.z;
              float* dst = out + ((c * g.x + sx) * g.y + sy) * g.z + (e - pad);
              for (std::int64_t z = zlo; z < zhi; ++z) dst[z] += src[z];
            }
          }
        }
}

}  // namespace

Conv3d::Conv3d(ParamStore& store, const std::string& name, Role role, std::int64_t in_channels,
               std::int64_t out_channels, std::int64_t kernel)
    : cin_(in_channels), cout_(out_channels), k_(kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("convolution kernel must be odd and positive");
  if (in_channels < 1 || out_channels < 1) throw ConfigError("convolution channels must be positive");
  const std::int64_t fan_in = in_channels * kernel * kernel * kernel;
  weight_ = &store.add(name + ".weight", role, {out_channels, in_channels, kernel, kernel, kernel}, fan_in);
  bias_ = &store.add(name + ".bias", role, {out_channels}, fan_in);
}

Tensor Conv3d::forward(const Tensor& x) {
  const Geometry g = geometry_of(x, "Conv3d");
  if (g.c != cin_) {
    throw ValidationError("Conv3d expects " + std::to_string(cin_) + " input channels, got " + std::to_string(g.c));
  }
  input_ = x;
  const std::int64_t kc = cin_ * k_ * k_ * k_;
  const std::int64_t p = g.spatial();
  Tensor y({g.n, cout_, g.x, g.y, g.z});
  const CMapMat w(weight_->value.data(), cout_, kc);
  const std::int64_t slab = g.y * g.z;
  const std::int64_t step = std::max<std::int64_t>(1, kColumnBudget / std::max<std::int64_t>(1, kc * slab));
  FloatBuffer col(k_ == 1 ? 0 : static_cast<std::size_t>(kc * slab * std::min(step, g.x)));

  for (std::int64_t n = 0; n < g.n; ++n) {
    const float* xn = x.data() + n * cin_ * p;
    MapMat yn(y.data() + n * cout_ * p, cout_, p);
    if (k_ == 1) {
      yn.noalias() = w * CMapMat(xn, cin_, p);
    } else {
      for (std::int64_t x0 = 0; x0 < g.x; x0 += step) {
        const std::int64_t x1 = std::min(g.x, x0 + step);
        const std::int64_t pc = (x1 - x0) * slab;
        im2col(xn, {1, g.c, g.x, g.y, g.z}, k_, x0, x1, col.data());
        yn.middleCols(x0 * slab, pc).noalias() = w * CMapMat(col.data(), kc, pc);
      }
    }
    for (std::int64_t o = 0; o < cout_; ++o) yn.row(o).array() += bias_->value[o];
  }
  return y;
}

Tensor Conv3d::backward(const Tensor& dy, bool need_input_grad) {
  const Geometry g = geometry_of(input_, "Conv3d");
  if (dy.shape() != std::vector<std::int64_t>{g.n, cout_, g.x, g.y, g.z}) {
    throw ValidationError("Conv3d backward: gradient shape " + shape_string(dy.shape()) + " does not match output");
  }
  const std::int64_t kc = cin_ * k_ * k_ * k_;
  const std::int64_t p = g.spatial();
  const CMapMat w(weight_->value.data(), cout_, kc);
  MapMat dw(weight_->grad.data(), cout_, kc);
  Tensor dx;
  if (need_input_grad) dx = Tensor(input_.shape());

  const std::int64_t slab = g.y * g.z;
  const std::int64_t step = std::max<std::int64_t>(1, kColumnBudget / std::max<std::int64_t>(1, kc * slab));
  const std::size_t chunk = static_cast<std::size_t>(kc * slab * std::min(step, g.x));
  FloatBuffer col(k_ == 1 ? 0 : chunk);
  FloatBuffer dcol(k_ == 1 || !need_input_grad ? 0 : chunk);

  for (std::int64_t n = 0; n < g.n; ++n) {
    const float* xn = input_.data() + n * cin_ * p;
    const CMapMat dyn(dy.data() + n * cout_ * p, cout_, p);
    for (std::int64_t o = 0; o < cout_; ++o) bias_->grad[o] += dyn.row(o).sum();
    if (k_ == 1) {
      dw.noalias() += dyn * CMapMat(xn, cin_, p).transpose();
      if (need_input_grad) MapMat(dx.data() + n * cin_ * p, cin_, p).noalias() = w.transpose() * dyn;
      continue;
    }
    for (std::int64_t x0 = 0; x0 < g.x; x0 += step) {
      const std::int64_t x1 = std::min(g.x, x0 + step);
      const std::int64_t pc = (x1 - x0) * slab;
      im2col(xn, {1, g.c, g.x, g.y, g.z}, k_, x0, x1, col.data());
      const auto dy_chunk = dyn.middleCols(x0 * slab, pc);
      dw.noalias() += dy_chunk * CMapMat(col.data(), kc, pc).transpose();
      if (need_input_grad) {
        MapMat(dcol.data(), kc, pc).noalias() = w.transpose() * dy_chunk;
        col2im(dcol.data(), {1, g.c, g.x, g.y, g.z}, k_, x0, x1, dx.data() + n * cin_ * p);
      }
    }
  }
  return dx;
}

Tensor ReLU::forward(const Tensor& x) {
  output_ = x;
  for (auto& v : output_.values()) v = v > 0.0f ? v : 0.0f;
  return output_;
}

Tensor ReLU::backward(const Tensor& dy) const {
  Tensor dx = dy;
  const float* out = output_.data();
  float* d = dx.data();
  for (std::int64_t i = 0; i < dx.numel(); ++i)
    if (!(out[i] > 0.0f)) d[i] = 0.0f;
  return dx;
}

Tensor MaxPool3d::forward(const Tensor& x) {
  const Geometry g = geometry_of(x, "MaxPool3d");
  if (g.x % f_[0] || g.y % f_[1] || g.z % f_[2]) {
    throw ValidationError("MaxPool3d factors (" + std::to_string(f_[0]) + "," + std::to_string(f_[1]) + "," +
                          std::to_string(f_[2]) + ") do not divide " + shape_string(x.shape()));
  }
  input_shape_ = x.shape();
  if (is_identity()) {
    argmax_.clear();
    return x;
  }
  const std::int64_t ox = g.x / f_[0], oy = g.y / f_[1], oz = g.z / f_[2];
  Tensor y({g.n, g.c, ox, oy, oz});
  argmax_.assign(static_cast<std::size_t>(y.numel()), 0);
  std::int64_t o = 0;
  for (std::int64_t nc = 0; nc < g.n * g.c; ++nc) {
    const float* base = x.data() + nc * g.spatial();
    for (std::int64_t i = 0; i < ox; ++i)
      for (std::int64_t j = 0; j < oy; ++j)
        for (std::int64_t k = 0; k < oz; ++k, ++o) {
          std::int64_t best = ((i * f_[0]) * g.y + j * f_[1]) * g.z + k * f_[2];
          float best_v = base[best];
          for (std::int64_t a = 0; a < f_[0]; ++a)
            for (std::int64_t b = 0; b < f_[1]; ++b)
              for (std::int64_t c = 0; c < f_[2]; ++c) {
                const std::int64_t idx = ((i * f_[0] + a) * g.y + j * f_[1] + b) * g.z + k * f_[2] + c;
                if (base[idx] > best_v) {
                  best_v = base[idx];
                  best = idx;
                }
              }
          y[o] = best_v;
          argmax_[static_cast<std::size_t>(o)] = static_cast<std::int32_t>(best);
        }
  }
  return y;
}

Tensor MaxPool3d::backward(const Tensor& dy) const {
  if (is_identity()) return dy;
  Tensor dx(input_shape_);
  const std::int64_t in_spatial = input_shape_[2] * input_shape_[3] * input_shape_[4];
  const std::int64_t out_spatial = dy.numel() / (input_shape_[0] * input_shape_[1]);
  for (std::int64_t o = 0; o < dy.numel(); ++o) {
    const std::int64_t nc = o / out_spatial;
    dx[nc * in_spatial + argmax_[static_cast<std::size_t>(o)]] += dy[o];
  }
  return dx;
}

Linear::Linear(ParamStore& store, const std::string& name, Role role, std::int64_t in, std::int64_t out)
    : in_(in), out_(out) {
  if (in < 1 || out < 1) throw ConfigError("linear layer extents must be positive");
  weight_ = &store.add(name + ".weight", role, {out, in}, in);
  bias_ = &store.add(name + ".bias", role, {out}, in);
}

Tensor Linear::forward(const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != in_) {
    throw ValidationError("Linear expects (N, " + std::to_string(in_) + "), got " + shape_string(x.shape()));
  }
  input_ = x;
  const std::int64_t n = x.dim(0);
  Tensor y({n, out_});
  MapMat ym(y.data(), n, out_);
  ym.noalias() = CMapMat(x.data(), n, in_) * CMapMat(weight_->value.data(), out_, in_).transpose();
  const Eigen::Map<const Eigen::RowVectorXf> b(bias_->value.data(), out_);
  ym.rowwise() += b;
  return y;
}

Tensor Linear::backward(const Tensor& dy, bool need_input_grad) {
  const std::int64_t n = input_.dim(0);
  if (dy.shape() != std::vector<std::int64_t>{n, out_}) {
    throw ValidationError("Linear backward: gradient shape " + shape_string(dy.shape()) + " does not match output");
  }
  const CMapMat dym(dy.data(), n, out_);
  MapMat(weight_->grad.data(), out_, in_).noalias() += dym.transpose() * CMapMat(input_.data(), n, in_);
  Eigen::Map<Eigen::RowVectorXf>(bias_->grad.data(), out_) += dym.colwise().sum();
  Tensor dx;
  if (need_input_grad) {
    dx = Tensor({n, in_});
    MapMat(dx.data(), n, in_).noalias() = dym * CMapMat(weight_->value.data(), out_, in_);
  }
  return dx;
}

Tensor GlobalAvgPool::forward(const Tensor& x) {
  const Geometry g = geometry_of(x, "GlobalAvgPool");
  input_shape_ = x.shape();
  Tensor y({g.n, g.c});
  const std::int64_t p = g.spatial();
  for (std::int64_t i = 0; i < g.n * g.c; ++i) {
    const float* src = x.data() + i * p;
    double s = 0.0;
    for (std::int64_t j = 0; j < p; ++j) s += src[j];
    y[i] = static_cast<float>(s / static_cast<double>(p));
  }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& dy) const {
  Tensor dx(input_shape_);
  const std::int64_t p = input_shape_[2] * input_shape_[3] * input_shape_[4];
  const float inv = 1.0f / static_cast<float>(p);
  for (std::int64_t i = 0; i < dy.numel(); ++i) std::fill_n(dx.data() + i * p, p, dy[i] * inv);
  return dx;
}

}  // namespace nn

namespace {

void check_factors(const std::array<std::int64_t, 3>& f) {
  if (f[0] < 1 || f[1] < 1 || f[2] < 1) throw ValidationError("voxel shuffle factors must be positive");
}

}  // namespace

Tensor voxel_shuffle(const Tensor& x, std::array<std::int64_t, 3> f) {
  check_factors(f);
  if (x.rank() != 5) throw ValidationError("voxel_shuffle expects a rank-5 tensor");
  const std::int64_t block = f[0] * f[1] * f[2];
  const std::int64_t n = x.dim(0), cb = x.dim(1), X = x.dim(2), Y = x.dim(3), Z = x.dim(4);
  if (cb % block) {
    throw ValidationError("voxel_shuffle: " + std::to_string(cb) + " channels not divisible by " + std::to_string(block));
  }
  const std::int64_t c = cb / block;
  Tensor y({n, c, X * f[0], Y * f[1], Z * f[2]});
  const std::int64_t OY = Y * f[1], OZ = Z * f[2];
  for (std::int64_t ni = 0; ni < n; ++ni)
    for (std::int64_t ci = 0; ci < c; ++ci)
      for (std::int64_t i = 0; i < f[0]; ++i)
        for (std::int64_t j = 0; j < f[1]; ++j)
          for (std::int64_t k = 0; k < f[2]; ++k) {
            const std::int64_t ch = ci * block + (i * f[1] + j) * f[2] + k;
            const float* src = x.data() + (ni * cb + ch) * X * Y * Z;
            float* dst = y.data() + (ni * c + ci) * X * f[0] * OY * OZ;
            for (std::int64_t xx = 0; xx < X; ++xx)
              for (std::int64_t yy = 0; yy < Y; ++yy)
                for (std::int64_t zz = 0; zz < Z; ++zz) {
                  dst[((xx * f[0] + i) * OY + yy * f[1] + j) * OZ + zz * f[2] + k] = src[(xx * Y + yy) * Z + zz];
                }
          }
  return y;
}

Tensor voxel_unshuffle(const Tensor& y, std::array<std::int64_t, 3> f) {
  check_factors(f);
  if (y.rank() != 5) throw ValidationError("voxel_unshuffle expects a rank-5 tensor");
  const std::int64_t n = y.dim(0), c = y.dim(1), OX = y.dim(2), OY = y.dim(3), OZ = y.dim(4);
  if (OX % f[0] || OY % f[1] || OZ % f[2]) {
    throw ValidationError("voxel_unshuffle: extent " + shape_string(y.shape()) + " not divisible by factors");
  }
  const std::int64_t X = OX / f[0], Y = OY / f[1], Z = OZ / f[2];
  const std::int64_t block = f[0] * f[1] * f[2];
  Tensor x({n, c * block, X, Y, Z});
  for (std::int64_t ni = 0; ni < n; ++ni)
    for (std::int64_t ci = 0; ci < c; ++ci)
      for (std::int64_t i = 0; i < f[0]; ++i)
        for (std::int64_t j = 0; j < f[1]; ++j)
          for (std::int64_t k = 0; k < f[2]; ++k) {
            const std::int64_t ch = ci * block + (i * f[1] + j) * f[2] + k;
            float* dst = x.data() + (ni * c * block + ch) * X * Y * Z;
            const float* src = y.data() + (ni * c + ci) * OX * OY * OZ;
            for (std::int64_t xx = 0; xx < X; ++xx)
              for (std::int64_t yy = 0; yy < Y; ++yy)
                for (std::int64_t zz = 0; zz < Z; ++zz) {
                  dst[(xx * Y + yy) * Z + zz] = src[((xx * f[0] + i) * OY + yy * f[1] + j) * OZ + zz * f[2] + k];
                }
          }
  return x;
}

}  // namespace rubikssl
