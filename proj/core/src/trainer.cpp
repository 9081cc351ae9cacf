#include "rubikssl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "rubikssl/errors.hpp"
#include "rubikssl/losses.hpp"
#include "rubikssl/optim.hpp"
#include "rubikssl/rng.hpp"

namespace rubikssl {

using nlohmann::ordered_json;

std::string MetricsReport::to_jsonl() const {
  std::string s;
  for (const auto& r : records) s += r.dump() + "\n";
  return s;
}

void MetricsReport::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write metrics " + path.string());
  out << to_jsonl();
  if (!out) throw IoError("write failed for " + path.string());
}

namespace {

// Seed path tags.
constexpr std::uint64_t kTagOrder = 1, kTagSample = 2, kTagEval = 3, kTagFinetuneOrder = 4;

class Stopwatch {
 public:
  explicit Stopwatch(bool frozen) : frozen_(frozen), start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    if (frozen_) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  bool frozen_;
  std::chrono::steady_clock::time_point start_;
};

void log_line(const TrainHooks& h, const std::string& s) {
  if (h.log) *h.log << s << std::endl;
}

// Builds items on `workers` threads, at most `capacity` ahead of the
// consumer, and hands them to `consume` strictly in index order.
template <typename T, typename Make, typename Consume>
void pipeline(std::size_t n, int workers, std::size_t capacity, Make make, Consume consume) {
  if (workers <= 0) {
    for (std::size_t b = 0; b < n; ++b) {
      T item = make(b);
      consume(b, item);
    }
    return;
  }
  std::mutex mu;
  std::condition_variable cv;
  std::map<std::size_t, T> ready;
  std::size_t next_claim = 0, next_consume = 0;
  bool stop = false;
  std::exception_ptr err;

  auto worker = [&] {
    for (;;) {
      std::size_t b;
      {
        std::unique_lock lk(mu);
        cv.wait(lk, [&] { return stop || next_claim >= n || next_claim < next_consume + capacity; });
        if (stop || next_claim >= n) return;
        b = next_claim++;
      }
      try {
        T item = make(b);
        std::lock_guard lk(mu);
        ready.emplace(b, std::move(item));
      } catch (...) {
        std::lock_guard lk(mu);
        if (!err) err = std::current_exception();
        stop = true;
      }
      cv.notify_all();
    }
  };
  std::vector<std::thread> pool;
  for (int i = 0; i < workers; ++i) pool.emplace_back(worker);

  try {
    for (std::size_t b = 0; b < n; ++b) {
      T item;
      {
        std::unique_lock lk(mu);
        cv.wait(lk, [&] { return stop || ready.contains(b); });
        if (!ready.contains(b)) break;
        item = std::move(ready.at(b));
        ready.erase(b);
        next_consume = b + 1;
      }
      cv.notify_all();
      consume(b, item);
    }
  } catch (...) {
    {
      std::lock_guard lk(mu);
      if (!err) err = std::current_exception();
      stop = true;
    }
    cv.notify_all();
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::int64_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const float* row = logits.data() + i * k;
    out[static_cast<std::size_t>(i)] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

struct ProxyStep {
  double loss, loss_perm, loss_rot;
  ProxyPrediction pred;
};

// Forward + loss; fills head gradients (already weighted) when asked.
ProxyStep proxy_forward(ProxyModel& model, std::span<const ProxySample> batch, const LossWeights& w, Tensor* d_perm,
                        Tensor* d_hor, Tensor* d_ver) {
  ProxyStep st{0, 0, 0, model.forward(batch)};
  std::vector<int> labels;
  std::vector<std::uint8_t> gh, gv;
  for (const auto& s : batch) {
    labels.push_back(s.perm_index);
    gh.insert(gh.end(), s.g_hor.begin(), s.g_hor.end());
    gv.insert(gv.end(), s.g_ver.begin(), s.g_ver.end());
  }
  Tensor dp, dh, dv;
  st.loss_perm = batch_cross_entropy(st.pred.perm_logits, labels, dp);
  st.loss_rot = batch_binary_cross_entropy(st.pred.hor_logits, gh, dh) +
                batch_binary_cross_entropy(st.pred.ver_logits, gv, dv);
  st.loss = total_loss(st.loss_perm, st.loss_rot, w);
  if (d_perm) {
    const auto a = static_cast<float>(w.alpha), b = static_cast<float>(w.beta);
    for (std::int64_t i = 0; i < dp.numel(); ++i) dp[i] *= a;
    for (std::int64_t i = 0; i < dh.numel(); ++i) dh[i] *= b;
    for (std::int64_t i = 0; i < dv.numel(); ++i) dv[i] *= b;
    *d_perm = std::move(dp);
    *d_hor = std::move(dh);
    *d_ver = std::move(dv);
  }
  return st;
}

Extent3 input_extent(const Shape4& s, const std::array<std::int64_t, 3>& input) {
  return {input[0] ? input[0] : s.x, input[1] ? input[1] : s.y, input[2] ? input[2] : s.z};
}

std::vector<std::uint8_t> stack_masks(const Dataset& data, std::span<const std::size_t> idx,
                                      const std::array<std::int64_t, 3>& input) {
  std::vector<std::uint8_t> out;
  for (auto i : idx) {
    const auto lv = data.get(i);
    if (!lv->seg_mask) throw ValidationError("volume " + std::to_string(i) + " has no segmentation mask");
    const auto e = input_extent(lv->volume.shape(), input);
    const Mask m = center_crop(*lv->seg_mask, e[0], e[1], e[2]);
    out.insert(out.end(), m.labels.begin(), m.labels.end());
  }
  return out;
}

std::vector<int> class_labels(const Dataset& data, std::span<const std::size_t> idx) {
  std::vector<int> out;
  for (auto i : idx) {
    const auto l = data.class_label(i);
    if (!l) throw ValidationError("volume " + std::to_string(i) + " has no class label");
    out.push_back(*l);
  }
  return out;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

ordered_json iou_json(const IouResult& r) {
  ordered_json per = ordered_json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    if (r.present[c]) per.push_back(r.per_class[c]);
    else per.push_back(nullptr);
  }
  return per;
}

}  // namespace

ProxySampler::ProxySampler(const Dataset& data, const GridSpec& grid, const PermutationBank& bank, double rot_prob,
                           std::uint64_t seed)
    : data_(data), grid_(grid), bank_(bank), rot_prob_(rot_prob), seed_(seed) {}

std::vector<std::size_t> ProxySampler::order(int epoch) const {
  auto v = iota(data_.size());
  Rng rng(derive_seed(seed_, {kTagOrder, static_cast<std::uint64_t>(epoch)}));
  rng.shuffle(std::span<std::size_t>(v));
  return v;
}

ProxySample ProxySampler::sample(int epoch, std::size_t position, std::size_t volume) const {
  const auto lv = data_.get(volume);
  return make_proxy_sample(lv->volume, grid_, bank_, rot_prob_,
                           derive_seed(seed_, {kTagSample, static_cast<std::uint64_t>(epoch), position}));
}

ProxySample ProxySampler::eval_sample(std::size_t volume) const {
  const auto lv = data_.get(volume);
  return make_proxy_sample(lv->volume, grid_, bank_, rot_prob_, derive_seed(seed_, {kTagEval, volume}));
}

ProxyEval evaluate_proxy(ProxyModel& model, std::span<const ProxySample> samples, const LossWeights& w,
                         int batch_size) {
  if (samples.empty()) throw ArgumentError("no proxy samples to evaluate");
  ProxyEval ev;
  std::size_t ordered = 0, oriented = 0, decisions = 0;
  const auto bs = static_cast<std::size_t>(std::max(batch_size, 1));
  for (std::size_t b = 0; b < samples.size(); b += bs) {
    const auto batch = samples.subspan(b, std::min(bs, samples.size() - b));
    const auto st = proxy_forward(model, batch, w, nullptr, nullptr, nullptr);
    const double frac = static_cast<double>(batch.size()) / static_cast<double>(samples.size());
    ev.loss += st.loss * frac;
    ev.loss_perm += st.loss_perm * frac;
    ev.loss_rot += st.loss_rot * frac;
    const auto pred = argmax_rows(st.pred.perm_logits);
    const std::int64_t m = st.pred.hor_logits.dim(1);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      ordered += pred[i] == batch[i].perm_index;
      for (std::int64_t j = 0; j < m; ++j) {
        const auto k = static_cast<std::int64_t>(i) * m + j;
        oriented += (st.pred.hor_logits[k] > 0.0f) == (batch[i].g_hor[static_cast<std::size_t>(j)] != 0);
        oriented += (st.pred.ver_logits[k] > 0.0f) == (batch[i].g_ver[static_cast<std::size_t>(j)] != 0);
        decisions += 2;
      }
    }
  }
  ev.ordering_acc = static_cast<double>(ordered) / static_cast<double>(samples.size());
  ev.orientation_acc = static_cast<double>(oriented) / static_cast<double>(decisions);
  return ev;
}

PretrainResult pretrain(const TrainConfig& cfg, const Dataset& train, const Dataset& test, const PermutationBank& bank,
                        const TrainHooks& hooks) {
  if (cfg.phase != Phase::pretrain) throw ConfigError("phase: pretrain() needs phase = pretrain");
  cfg.validate();
  if (bank.m != cfg.cubes()) {
    throw ConfigError("grid.shape: grid has " + std::to_string(cfg.cubes()) + " cubes but the bank permutes " +
                      std::to_string(bank.m));
  }
  if (bank.k != cfg.perms) {
    throw ConfigError("proxy.perms: config says K=" + std::to_string(cfg.perms) + " but the bank holds " +
                      std::to_string(bank.k));
  }
  if (train.size() == 0) throw ConfigError("data: empty training split");
  if (test.size() == 0) throw ConfigError("data: empty test split");
  for (const Dataset* d : {&train, &test}) {
    const Shape4 s = d->get(0)->volume.shape();
    if (s.c != cfg.in_channels) {
      throw ConfigError("model.in_channels: config says " + std::to_string(cfg.in_channels) + ", volumes have " +
                        std::to_string(s.c));
    }
    plan_grid(s, cfg.grid, cfg.seed);
  }

  const std::string chash = config_hash(config_to_map(cfg));
  const Stopwatch clock(cfg.deterministic);
  const BackboneConfig backbone = cfg.backbone_config();
  ProxyModel model(backbone, {cfg.cubes(), cfg.perms, cfg.grid.cube}, cfg.seed);
  Optimizer opt(model.params(), cfg.optim);

  const ProxySampler train_sampler(train, cfg.grid, bank, cfg.rot_prob, cfg.seed);
  const ProxySampler test_sampler(test, cfg.grid, bank, cfg.rot_prob, cfg.seed);
  std::vector<ProxySample> eval_set;
  for (std::size_t i = 0; i < test.size(); ++i) eval_set.push_back(test_sampler.eval_sample(i));

  PretrainResult res;
  res.report.config_hash = chash;
  long step = 0;
  auto record = [&](int epoch, const std::optional<ProxyEval>& tr) {
    const ProxyEval ev = evaluate_proxy(model, eval_set, cfg.loss, cfg.batch_size);
    ordered_json r;
    r["epoch"] = epoch;
    r["step"] = step;
    r["train_loss"] = tr ? ordered_json(tr->loss) : ordered_json(nullptr);
    r["train_loss_perm"] = tr ? ordered_json(tr->loss_perm) : ordered_json(nullptr);
    r["train_loss_rot"] = tr ? ordered_json(tr->loss_rot) : ordered_json(nullptr);
    r["eval_loss"] = ev.loss;
    r["eval_loss_perm"] = ev.loss_perm;
    r["eval_loss_rot"] = ev.loss_rot;
    r["ordering_acc"] = ev.ordering_acc;
    r["orientation_acc"] = ev.orientation_acc;
    r["wall_clock_s"] = clock.seconds();
    r["config_hash"] = chash;
    res.report.records.push_back(r);
    log_line(hooks, "pretrain epoch " + std::to_string(epoch) + " eval_loss " + std::to_string(ev.loss) +
                        " ordering " + std::to_string(ev.ordering_acc) + " orientation " +
                        std::to_string(ev.orientation_acc));
  };
  record(0, std::nullopt);

  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t nbatches = (train.size() + bs - 1) / bs;
  const int workers = cfg.deterministic ? 0 : cfg.workers;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = train_sampler.order(epoch);
    ProxyEval acc;
    auto make = [&](std::size_t b) {
      std::vector<ProxySample> batch;
      for (std::size_t p = b * bs; p < std::min(order.size(), (b + 1) * bs); ++p)
        batch.push_back(train_sampler.sample(epoch, p, order[p]));
      return batch;
    };
    auto consume = [&](std::size_t, std::vector<ProxySample>& batch) {
      model.params().zero_grad();
      Tensor dp, dh, dv;
      const auto st = proxy_forward(model, batch, cfg.loss, &dp, &dh, &dv);
      if (!std::isfinite(st.loss)) throw Error("pretraining diverged at step " + std::to_string(step));
      model.backward(dp, dh, dv);
      opt.step();
      ++step;
      const double frac = static_cast<double>(batch.size()) / static_cast<double>(order.size());
      acc.loss += st.loss * frac;
      acc.loss_perm += st.loss_perm * frac;
      acc.loss_rot += st.loss_rot * frac;
      if (hooks.on_step) hooks.on_step(epoch, step, st.loss);
    };
    pipeline<std::vector<ProxySample>>(nbatches, workers, static_cast<std::size_t>(2 * std::max(workers, 1)), make,
                                       consume);
    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) record(epoch, acc);
  }

  CheckpointMeta meta;
  meta.kind = "proxy";
  meta.backbone = backbone;
  meta.bank_hash = bank_hash(bank);
  meta.step = step;
  meta.seed = cfg.seed;
  meta.cubes = cfg.cubes();
  meta.perms = cfg.perms;
  meta.cube = cfg.grid.cube;
  res.checkpoint = snapshot(model.params(), meta);
  return res;
}

std::vector<double> overfit_one_batch(ProxyModel& model, std::span<const ProxySample> batch, const LossWeights& w,
                                      const OptimizerConfig& opt_cfg, int steps) {
  Optimizer opt(model.params(), opt_cfg);
  std::vector<double> trace;
  for (int s = 0; s < steps; ++s) {
    model.params().zero_grad();
    Tensor dp, dh, dv;
    const auto st = proxy_forward(model, batch, w, &dp, &dh, &dv);
    trace.push_back(st.loss);
    model.backward(dp, dh, dv);
    opt.step();
  }
  trace.push_back(proxy_forward(model, batch, w, nullptr, nullptr, nullptr).loss);
  return trace;
}

Tensor stack_volumes(const Dataset& data, std::span<const std::size_t> idx, const std::array<std::int64_t, 3>& input) {
  if (idx.empty()) throw ArgumentError("stack_volumes: no indices");
  std::vector<Volume> vols;
  for (auto i : idx) {
    const auto lv = data.get(i);
    const auto e = input_extent(lv->volume.shape(), input);
    vols.push_back(center_crop(lv->volume, e[0], e[1], e[2]));
  }
  const Shape4 s = vols.front().shape();
  Tensor x({static_cast<std::int64_t>(vols.size()), s.c, s.x, s.y, s.z});
  float* dst = x.data();
  for (const auto& v : vols) {
    if (v.shape() != s) throw ValidationError("volumes differ in shape; set task.input to crop them");
    dst = std::copy(v.data().begin(), v.data().end(), dst);
  }
  return x;
}

TaskEval evaluate_classifier(ClassifierModel& model, const Dataset& data, const std::array<std::int64_t, 3>& input,
                             int batch_size) {
  if (data.size() == 0) throw ArgumentError("no volumes to evaluate");
  TaskEval ev;
  const auto all = iota(data.size());
  const auto labels = class_labels(data, all);
  const auto bs = static_cast<std::size_t>(std::max(batch_size, 1));
  for (std::size_t b = 0; b < all.size(); b += bs) {
    const std::span<const std::size_t> idx(all.data() + b, std::min(bs, all.size() - b));
    const Tensor logits = model.forward(stack_volumes(data, idx, input));
    Tensor g;
    ev.loss += batch_cross_entropy(logits, std::span<const int>(labels.data() + b, idx.size()), g) *
               static_cast<double>(idx.size()) / static_cast<double>(all.size());
    const auto pred = argmax_rows(logits);
    ev.predictions.insert(ev.predictions.end(), pred.begin(), pred.end());
  }
  ev.acc = accuracy(ev.predictions, labels);
  return ev;
}

TaskEval evaluate_segmenter(DucSegmenter& model, const Dataset& data, const std::array<std::int64_t, 3>& input,
                            int batch_size) {
  if (data.size() == 0) throw ArgumentError("no volumes to evaluate");
  TaskEval ev;
  const auto all = iota(data.size());
  std::vector<std::uint8_t> pred_all, true_all;
  const auto bs = static_cast<std::size_t>(std::max(batch_size, 1));
  const auto ncls = model.num_classes();
  for (std::size_t b = 0; b < all.size(); b += bs) {
    const std::span<const std::size_t> idx(all.data() + b, std::min(bs, all.size() - b));
    const Tensor logits = model.forward(stack_volumes(data, idx, input));
    const auto truth = stack_masks(data, idx, input);
    Tensor g;
    ev.loss += voxel_cross_entropy(logits, truth, g) * static_cast<double>(idx.size()) / static_cast<double>(all.size());
    const std::int64_t p = logits.dim(2) * logits.dim(3) * logits.dim(4);
    for (std::int64_t n = 0; n < logits.dim(0); ++n) {
      const float* base = logits.data() + n * ncls * p;
      for (std::int64_t v = 0; v < p; ++v) {
        int best = 0;
        for (int c = 1; c < ncls; ++c)
          if (base[c * p + v] > base[best * p + v]) best = c;
        pred_all.push_back(static_cast<std::uint8_t>(best));
      }
    }
    true_all.insert(true_all.end(), truth.begin(), truth.end());
  }
  ev.iou = mean_iou(pred_all, true_all, ncls);
  return ev;
}

FinetuneResult finetune(const TrainConfig& cfg, const Dataset& train, const Dataset& test, const TrainHooks& hooks) {
  if (cfg.init == "scratch") return finetune(cfg, train, test, nullptr, hooks);
  ModelCheckpoint ck;
  try {
    ck = load_checkpoint(cfg.init);
  } catch (const FormatError& e) {
    throw TransferError(std::string("cannot transfer: ") + e.what());
  } catch (const CorruptionError& e) {
    throw TransferError(std::string("cannot transfer: ") + e.what());
  }
  return finetune(cfg, train, test, &ck, hooks);
}

namespace {

template <typename Model>
FinetuneResult finetune_impl(const TrainConfig& cfg, const Dataset& train, const Dataset& test,
                             const ModelCheckpoint* init, const TrainHooks& hooks) {
  constexpr bool seg = std::is_same_v<Model, DucSegmenter>;
  const BackboneConfig backbone = cfg.backbone_config();
  Model model(backbone, cfg.num_classes, cfg.seed);

  // Shapes and labels are checked on the first batch before any update.
  {
    const std::size_t i0 = 0;
    const Tensor x = stack_volumes(train, std::span(&i0, 1), cfg.input);
    if (x.dim(1) != cfg.in_channels) {
      throw ConfigError("model.in_channels: config says " + std::to_string(cfg.in_channels) + ", volumes have " +
                        std::to_string(x.dim(1)));
    }
    try {
      backbone.output_extent({x.dim(2), x.dim(3), x.dim(4)});
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("task.input: ") + e.what());
    }
  }

  FinetuneResult res;
  if (init) res.transfer = transfer(*init, model.params(), {Role::encoder});
  else
    for (std::size_t i = 0; i < model.params().size(); ++i) res.transfer.fresh.push_back(model.params()[i].name);

  CheckpointMeta meta;
  meta.kind = seg ? "segmenter" : "classifier";
  meta.backbone = backbone;
  meta.bank_hash = init ? init->meta.bank_hash : "";
  meta.seed = cfg.seed;
  meta.num_classes = cfg.num_classes;
  res.initial = snapshot(model.params(), meta);

  std::function<bool(const Param&)> trainable;
  if (cfg.freeze_encoder) trainable = [](const Param& p) { return p.role != Role::encoder; };
  Optimizer opt(model.params(), cfg.optim, trainable);

  const std::string chash = config_hash(config_to_map(cfg));
  res.report.config_hash = chash;
  const Stopwatch clock(cfg.deterministic);
  long step = 0;
  auto record = [&](int epoch, std::optional<double> train_loss) {
    ordered_json r;
    r["epoch"] = epoch;
    r["step"] = step;
    r["train_loss"] = train_loss ? ordered_json(*train_loss) : ordered_json(nullptr);
    std::string summary;
    if constexpr (seg) {
      const auto ev = evaluate_segmenter(model, test, cfg.input, cfg.batch_size);
      r["eval_loss"] = ev.loss;
      r["per_class_iou"] = iou_json(ev.iou);
      r["miou"] = ev.iou.miou;
      res.final_metric = ev.iou.miou;
      summary = " miou " + std::to_string(ev.iou.miou);
    } else {
      const auto ev = evaluate_classifier(model, test, cfg.input, cfg.batch_size);
      r["eval_loss"] = ev.loss;
      r["acc"] = ev.acc;
      res.final_metric = ev.acc;
      summary = " acc " + std::to_string(ev.acc);
    }
    r["wall_clock_s"] = clock.seconds();
    r["config_hash"] = chash;
    res.report.records.push_back(r);
    log_line(hooks, std::string(seg ? "finetune_seg" : "finetune_cls") + " epoch " + std::to_string(epoch) + summary);
  };
  record(0, std::nullopt);

  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto order = iota(train.size());
    Rng rng(derive_seed(cfg.seed, {kTagFinetuneOrder, static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::span<const std::size_t> idx(order.data() + b, std::min(bs, order.size() - b));
      model.params().zero_grad();
      const Tensor logits = model.forward(stack_volumes(train, idx, cfg.input));
      Tensor g;
      double loss;
      if constexpr (seg) loss = voxel_cross_entropy(logits, stack_masks(train, idx, cfg.input), g);
      else loss = batch_cross_entropy(logits, class_labels(train, idx), g);
      if (!std::isfinite(loss)) throw Error("fine-tuning diverged at step " + std::to_string(step));
      model.backward(g);
      opt.step();
      ++step;
      epoch_loss += loss * static_cast<double>(idx.size()) / static_cast<double>(order.size());
      if (hooks.on_step) hooks.on_step(epoch, step, loss);
    }
    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) record(epoch, epoch_loss);
  }
  meta.step = step;
  res.checkpoint = snapshot(model.params(), meta);
  return res;
}

}  // namespace

FinetuneResult finetune(const TrainConfig& cfg, const Dataset& train, const Dataset& test, const ModelCheckpoint* init,
                        const TrainHooks& hooks) {
  cfg.validate();
  if (train.size() == 0) throw ConfigError("data: empty training split");
  if (test.size() == 0) throw ConfigError("data: empty test split");
  switch (cfg.phase) {
    case Phase::finetune_cls: return finetune_impl<ClassifierModel>(cfg, train, test, init, hooks);
    case Phase::finetune_seg: return finetune_impl<DucSegmenter>(cfg, train, test, init, hooks);
    default: throw ConfigError("phase: finetune() needs finetune_cls or finetune_seg");
  }
}

ordered_json evaluate_checkpoint(const ModelCheckpoint& ckpt, const Dataset& data, const PermutationBank* bank,
                                 const TrainConfig& cfg) {
  const std::set<Role> all{Role::encoder, Role::proxy_head, Role::cls_head, Role::seg_decoder};
  ordered_json r;
  r["kind"] = ckpt.meta.kind;
  r["volumes"] = data.size();
  if (ckpt.meta.kind == "proxy") {
    if (!bank) throw ConfigError("bank: evaluating a proxy checkpoint needs the permutation bank");
    if (bank_hash(*bank) != ckpt.meta.bank_hash) throw ConfigError("bank: does not match the checkpoint's bank hash");
    ProxyModel model(ckpt.meta.backbone, {ckpt.meta.cubes, ckpt.meta.perms, ckpt.meta.cube}, ckpt.meta.seed);
    transfer(ckpt, model.params(), all);
    GridSpec grid = cfg.grid;
    grid.cube = ckpt.meta.cube;
    const ProxySampler sampler(data, grid, *bank, cfg.rot_prob, cfg.seed);
    std::vector<ProxySample> samples;
    for (std::size_t i = 0; i < data.size(); ++i) samples.push_back(sampler.eval_sample(i));
    const auto ev = evaluate_proxy(model, samples, cfg.loss, cfg.batch_size);
    r["loss"] = ev.loss;
    r["ordering_acc"] = ev.ordering_acc;
    r["orientation_acc"] = ev.orientation_acc;
  } else if (ckpt.meta.kind == "classifier") {
    ClassifierModel model(ckpt.meta.backbone, ckpt.meta.num_classes, ckpt.meta.seed);
    transfer(ckpt, model.params(), all);
    const auto ev = evaluate_classifier(model, data, cfg.input, cfg.batch_size);
    r["loss"] = ev.loss;
    r["acc"] = ev.acc;
  } else if (ckpt.meta.kind == "segmenter") {
    DucSegmenter model(ckpt.meta.backbone, ckpt.meta.num_classes, ckpt.meta.seed);
    transfer(ckpt, model.params(), all);
    const auto ev = evaluate_segmenter(model, data, cfg.input, cfg.batch_size);
    r["loss"] = ev.loss;
    r["per_class_iou"] = iou_json(ev.iou);
    r["miou"] = ev.iou.miou;
  } else {
    throw FormatError("unknown checkpoint kind '" + ckpt.meta.kind + "'");
  }
  return r;
}

}  // namespace rubikssl
