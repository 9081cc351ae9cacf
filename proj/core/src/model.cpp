#include "rubikssl/model.hpp"

#include <sstream>

#include "rubikssl/errors.hpp"

namespace rubikssl {

BackboneConfig BackboneConfig::vgg(std::int64_t in_channels) {
  return {in_channels,
          {{2, 64, {2, 2, 2}}, {2, 128, {2, 2, 2}}, {3, 256, {2, 2, 1}}, {3, 512, {1, 1, 1}}}};
}

BackboneConfig BackboneConfig::vgg_iso(std::int64_t in_channels) {
  return {in_channels,
          {{2, 64, {2, 2, 2}}, {2, 128, {2, 2, 2}}, {3, 256, {2, 2, 2}}, {3, 512, {1, 1, 1}}}};
}

BackboneConfig BackboneConfig::small(std::int64_t in_channels) {
  return {in_channels, {{1, 8, {2, 2, 2}}, {1, 16, {2, 2, 2}}, {1, 32, {2, 2, 2}}}};
}

void BackboneConfig::validate() const {
  if (in_channels < 1) throw ConfigError("backbone needs at least one input channel");
  if (stages.empty()) throw ConfigError("backbone needs at least one stage");
  for (const auto& s : stages) {
    if (s.convs < 1 || s.channels < 1) throw ConfigError("backbone stages need >= 1 conv and >= 1 channel");
    for (auto f : s.pool)
      if (f < 1) throw ConfigError("pooling factors must be positive");
  }
}

Extent3 BackboneConfig::downsample() const {
  Extent3 d{1, 1, 1};
  for (const auto& s : stages)
    for (int a = 0; a < 3; ++a) d[a] *= s.pool[a];
  return d;
}

std::int64_t BackboneConfig::out_channels() const { return stages.empty() ? in_channels : stages.back().channels; }

Extent3 BackboneConfig::output_extent(const Extent3& input) const {
  const auto d = downsample();
  for (int a = 0; a < 3; ++a) {
    if (input[a] < 1 || input[a] % d[a] != 0) {
      throw ValidationError("input extent (" + std::to_string(input[0]) + "," + std::to_string(input[1]) + "," +
                            std::to_string(input[2]) + ") must be a multiple of the encoder downsampling (" +
                            std::to_string(d[0]) + "," + std::to_string(d[1]) + "," + std::to_string(d[2]) + ")");
    }
  }
  return {input[0] / d[0], input[1] / d[1], input[2] / d[2]};
}

std::int64_t BackboneConfig::feature_dim(const Extent3& cube) const {
  const auto e = output_extent(cube);
  return out_channels() * e[0] * e[1] * e[2];
}

std::string to_string(const BackboneConfig& cfg) {
  std::ostringstream os;
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const auto& s = cfg.stages[i];
    os << (i ? ";" : "") << s.convs << "x" << s.channels << "@" << s.pool[0] << "," << s.pool[1] << "," << s.pool[2];
  }
  return os.str();
}

BackboneConfig backbone_from_string(const std::string& text, std::int64_t in_channels) {
  if (text == "vgg") return BackboneConfig::vgg(in_channels);
  if (text == "vgg_iso") return BackboneConfig::vgg_iso(in_channels);
  if (text == "small") return BackboneConfig::small(in_channels);
  BackboneConfig cfg{in_channels, {}};
  std::stringstream ss(text);
  std::string stage;
  while (std::getline(ss, stage, ';')) {
    StageSpec s;
    char x = 0, at = 0, c1 = 0, c2 = 0;
    std::istringstream is(stage);
    if (!(is >> s.convs >> x >> s.channels >> at >> s.pool[0] >> c1 >> s.pool[1] >> c2 >> s.pool[2]) || x != 'x' ||
        at != '@' || c1 != ',' || c2 != ',') {
      throw ConfigError("bad backbone stage '" + stage + "', expected <convs>x<channels>@<fx>,<fy>,<fz>");
    }
    cfg.stages.push_back(s);
  }
  cfg.validate();
  return cfg;
}

Encoder::Encoder(ParamStore& store, const BackboneConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  std::int64_t in = cfg_.in_channels;
  for (std::size_t i = 0; i < cfg_.stages.size(); ++i) {
    const auto& spec = cfg_.stages[i];
    Stage st{{}, {}, nn::MaxPool3d(spec.pool)};
    for (int j = 0; j < spec.convs; ++j) {
      st.convs.emplace_back(store, "enc.s" + std::to_string(i) + ".c" + std::to_string(j), Role::encoder, in,
                            spec.channels, 3);
      st.relus.emplace_back();
      in = spec.channels;
    }
    stages_.push_back(std::move(st));
  }
}

Tensor Encoder::forward(const Tensor& x) {
  Tensor h = x;
  for (auto& st : stages_) {
    for (std::size_t j = 0; j < st.convs.size(); ++j) h = st.relus[j].forward(st.convs[j].forward(h));
    h = st.pool.forward(h);
  }
  return h;
}

Tensor Encoder::backward(const Tensor& dy, bool need_input_grad) {
  Tensor g = dy;
  for (std::size_t i = stages_.size(); i-- > 0;) {
    auto& st = stages_[i];
    g = st.pool.backward(g);
    for (std::size_t j = st.convs.size(); j-- > 0;) {
      const bool first = i == 0 && j == 0;
      g = st.convs[j].backward(st.relus[j].backward(g), !first || need_input_grad);
    }
  }
  return g;
}

ProxyModel::ProxyModel(const BackboneConfig& backbone, const ProxyModelSpec& spec, std::uint64_t seed)
    : spec_(spec),
      feature_dim_(backbone.feature_dim(spec.cube)),
      encoder_(store_, backbone),
      perm_head_(store_, "head.perm", Role::proxy_head, spec.cubes * feature_dim_, spec.perms),
      hor_head_(store_, "head.rot.hor", Role::proxy_head, spec.cubes * feature_dim_, spec.cubes),
      ver_head_(store_, "head.rot.ver", Role::proxy_head, spec.cubes * feature_dim_, spec.cubes) {
  if (spec.cubes < 2) throw ConfigError("proxy model needs M >= 2");
  if (spec.perms < 2) throw ConfigError("proxy model needs K >= 2");
  init_params(store_, seed);
}

Tensor ProxyModel::stack(std::span<const Cube> cubes) const {
  if (cubes.empty()) throw ValidationError("no cubes given");
  const Shape4 s = cubes.front().shape;
  if (s.c != backbone().in_channels || s.x != spec_.cube[0] || s.y != spec_.cube[1] || s.z != spec_.cube[2]) {
    throw ValidationError("cube shape " + to_string(s) + " does not match the model (" +
                          std::to_string(backbone().in_channels) + "," + std::to_string(spec_.cube[0]) + "," +
                          std::to_string(spec_.cube[1]) + "," + std::to_string(spec_.cube[2]) + ")");
  }
  Tensor x({static_cast<std::int64_t>(cubes.size()), s.c, s.x, s.y, s.z});
  float* dst = x.data();
  for (const auto& c : cubes) {
    if (c.shape != s) throw ValidationError("all cubes must share one shape");
    dst = std::copy(c.data.begin(), c.data.end(), dst);
  }
  return x;
}

Tensor ProxyModel::branch_features(std::span<const Cube> cubes) {
  Tensor f = encoder_.forward(stack(cubes));
  encoded_shape_ = f.shape();
  f.reshape({static_cast<std::int64_t>(cubes.size()), feature_dim_});
  return f;
}

ProxyPrediction ProxyModel::heads(const Tensor& concatenated) {
  return {perm_head_.forward(concatenated), hor_head_.forward(concatenated), ver_head_.forward(concatenated)};
}

ProxyPrediction ProxyModel::forward(std::span<const Cube> cubes) {
  if (static_cast<int>(cubes.size()) != spec_.cubes) {
    throw ValidationError("expected " + std::to_string(spec_.cubes) + " cubes, got " + std::to_string(cubes.size()));
  }
  Tensor f = branch_features(cubes);
  f.reshape({1, spec_.cubes * feature_dim_});
  return heads(f);
}

ProxyPrediction ProxyModel::forward(std::span<const ProxySample> batch) {
  std::vector<Cube> all;
  all.reserve(batch.size() * static_cast<std::size_t>(spec_.cubes));
  for (const auto& s : batch) {
    if (static_cast<int>(s.cubes.size()) != spec_.cubes) {
      throw ValidationError("sample has " + std::to_string(s.cubes.size()) + " cubes, model expects " +
                            std::to_string(spec_.cubes));
    }
    all.insert(all.end(), s.cubes.begin(), s.cubes.end());
  }
  // Rows b*M + i hold slot i of sample b, so flattening (B*M, F) to
  // (B, M*F) concatenates branch features in slot order.
  Tensor f = branch_features(all);
  f.reshape({static_cast<std::int64_t>(batch.size()), spec_.cubes * feature_dim_});
  return heads(f);
}

void ProxyModel::backward(const Tensor& d_perm, const Tensor& d_hor, const Tensor& d_ver) {
  Tensor d = perm_head_.backward(d_perm);
  const Tensor dh = hor_head_.backward(d_hor);
  const Tensor dv = ver_head_.backward(d_ver);
  for (std::int64_t i = 0; i < d.numel(); ++i) d[i] += dh[i] + dv[i];
  d.reshape(encoded_shape_);
  encoder_.backward(d, false);
}

ClassifierModel::ClassifierModel(const BackboneConfig& backbone, int num_classes, std::uint64_t seed)
    : num_classes_(num_classes),
      encoder_(store_, backbone),
      head_(store_, "head.cls", Role::cls_head, backbone.out_channels(), num_classes) {
  if (num_classes < 2) throw ConfigError("classifier needs at least 2 classes");
  init_params(store_, seed);
}

Tensor ClassifierModel::forward(const Tensor& x) {
  if (x.rank() != 5 || x.dim(1) != backbone().in_channels) {
    throw ValidationError("classifier expects (N, " + std::to_string(backbone().in_channels) +
                          ", X, Y, Z), got " + shape_string(x.shape()));
  }
  backbone().output_extent({x.dim(2), x.dim(3), x.dim(4)});
  return head_.forward(gap_.forward(encoder_.forward(x)));
}

void ClassifierModel::backward(const Tensor& d_logits) {
  encoder_.backward(gap_.backward(head_.backward(d_logits)), false);
}

DucSegmenter::DucSegmenter(const BackboneConfig& backbone, int num_classes, std::uint64_t seed)
    : num_classes_(num_classes),
      encoder_(store_, backbone),
      duc_(store_, "dec.duc", Role::seg_decoder, backbone.out_channels(),
           backbone.downsample()[0] * backbone.downsample()[1] * backbone.downsample()[2] * num_classes, 1) {
  if (num_classes < 2) throw ConfigError("segmenter needs at least 2 classes");
  init_params(store_, seed);
}

Tensor DucSegmenter::forward(const Tensor& x) {
  if (x.rank() != 5 || x.dim(1) != backbone().in_channels) {
    throw ValidationError("segmenter expects (N, " + std::to_string(backbone().in_channels) +
                          ", X, Y, Z), got " + shape_string(x.shape()));
  }
  backbone().output_extent({x.dim(2), x.dim(3), x.dim(4)});
  return voxel_shuffle(duc_.forward(encoder_.forward(x)), backbone().downsample());
}

void DucSegmenter::backward(const Tensor& d_logits) {
  encoder_.backward(duc_.backward(voxel_unshuffle(d_logits, backbone().downsample())), false);
}

std::int64_t duc_decoder_param_count(const BackboneConfig& backbone, int num_classes) {
  const auto d = backbone.downsample();
  const std::int64_t out = d[0] * d[1] * d[2] * num_classes;
  return backbone.out_channels() * out + out;
}

std::int64_t transposed_decoder_param_count(const BackboneConfig& backbone, int num_classes) {
  std::int64_t total = 0;
  std::int64_t cur = backbone.out_channels();
  for (std::size_t i = backbone.stages.size(); i-- > 0;) {
    const auto& s = backbone.stages[i];
    const std::int64_t kernel = s.pool[0] * s.pool[1] * s.pool[2];
    if (kernel > 1) {
      total += cur * s.channels * kernel + s.channels;
      cur = s.channels;
    }
    for (int j = 0; j < s.convs; ++j) {
      total += cur * s.channels * 27 + s.channels;
      cur = s.channels;
    }
  }
  return total + cur * num_classes + num_classes;
}

}  // namespace rubikssl
