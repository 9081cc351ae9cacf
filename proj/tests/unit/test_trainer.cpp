#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rubikssl/compare.hpp"
#include "rubikssl/errors.hpp"
#include "rubikssl/synthetic.hpp"
#include "rubikssl/trainer.hpp"

using namespace rubikssl;

namespace {

Dataset synth(std::int64_t n, std::uint64_t seed, int classes = 2) {
  return Dataset::from_memory(generate_synthetic_dataset(n, {1, 32, 32, 32}, classes, seed));
}

TrainConfig small_pretrain(int epochs = 1) {
  auto c = default_config(Phase::pretrain);
  c.grid.cube = {16, 16, 16};
  c.grid.gap = 0;
  c.perms = 4;
  c.epochs = epochs;
  c.batch_size = 4;
  c.deterministic = true;
  c.seed = 3;
  return c;
}

TrainConfig small_finetune(Phase phase = Phase::finetune_cls, int epochs = 1) {
  auto c = default_config(phase);
  c.epochs = epochs;
  c.batch_size = 4;
  c.deterministic = true;
  c.seed = 3;
  c.optim.kind = OptimizerKind::adam;
  return c;
}

std::vector<nlohmann::ordered_json> strip_clock(std::vector<nlohmann::ordered_json> r) {
  for (auto& j : r) {
    j.erase("wall_clock_s");
    j.erase("config_hash");
  }
  return r;
}

}  // namespace

TEST_CASE("proxy sampler is a pure function of its coordinates") {
  const auto data = synth(6, 1);
  const auto bank = generate_bank(8, 4, 0);
  GridSpec g;
  g.cube = {16, 16, 16};
  g.gap = 0;
  ProxySampler a(data, g, bank, 0.5, 11), b(data, g, bank, 0.5, 11);
  CHECK(a.order(0) == b.order(0));
  CHECK(a.order(0) != a.order(1));
  auto o = a.order(2);
  std::sort(o.begin(), o.end());
  CHECK(o == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
  CHECK(a.sample(1, 3, 2).cubes == b.sample(1, 3, 2).cubes);
  CHECK(a.eval_sample(4).perm_index == b.eval_sample(4).perm_index);
  CHECK(a.eval_sample(4).cubes == a.eval_sample(4).cubes);
}

TEST_CASE("pretrain records, bounds and chance-level start") {
  const auto train = synth(8, 1), test = synth(40, 2);
  const auto bank = generate_bank(8, 4, 0);
  auto cfg = small_pretrain(2);
  const auto res = pretrain(cfg, train, test, bank);
  REQUIRE(res.report.records.size() == 3);
  const auto& r0 = res.report.records[0];
  CHECK(r0["epoch"] == 0);
  CHECK(r0["train_loss"].is_null());
  // Untrained ordering accuracy sits inside the 3-sigma binomial band of 1/K.
  const double p = 0.25, sigma = std::sqrt(p * (1 - p) / 40);
  CHECK(std::abs(r0["ordering_acc"].get<double>() - p) <= 3 * sigma);
  const double q = 0.5, sq = std::sqrt(q * (1 - q) / (40 * 16));
  CHECK(std::abs(r0["orientation_acc"].get<double>() - q) <= 3 * sq);
  for (const auto& r : res.report.records) {
    for (const char* k : {"ordering_acc", "orientation_acc"}) {
      CHECK(r[k].get<double>() >= 0.0);
      CHECK(r[k].get<double>() <= 1.0);
    }
    CHECK(r["eval_loss"].get<double>() >= 0.0);
    CHECK(r["wall_clock_s"] == 0.0);
    CHECK(r["config_hash"] == config_hash(config_to_map(cfg)));
  }
  CHECK(res.report.records[2]["step"] == 4);
  CHECK(res.checkpoint.meta.kind == "proxy");
  CHECK(res.checkpoint.meta.bank_hash == bank_hash(bank));
  CHECK(res.checkpoint.meta.step == 4);
  CHECK(res.report.to_jsonl().find('\n') != std::string::npos);
}

TEST_CASE("pretrain is deterministic and thread count does not change results") {
  const auto train = synth(8, 1), test = synth(4, 2);
  const auto bank = generate_bank(8, 4, 0);
  const auto cfg = small_pretrain(2);
  const auto a = pretrain(cfg, train, test, bank);
  const auto b = pretrain(cfg, train, test, bank);
  CHECK(a.report.to_jsonl() == b.report.to_jsonl());
  CHECK(a.checkpoint == b.checkpoint);

  auto threaded = cfg;
  threaded.deterministic = false;
  threaded.workers = 3;
  const auto c = pretrain(threaded, train, test, bank);
  CHECK(strip_clock(c.report.records) == strip_clock(a.report.records));
  CHECK(c.checkpoint.params == a.checkpoint.params);
}

TEST_CASE("pretrain rejects inconsistent setups before training") {
  const auto train = synth(4, 1), test = synth(2, 2);
  int steps = 0;
  TrainHooks hooks;
  hooks.on_step = [&](int, long, double) { ++steps; };
  auto cfg = small_pretrain();
  CHECK_THROWS_AS(pretrain(cfg, train, test, generate_bank(4, 4, 0), hooks), ConfigError);
  CHECK_THROWS_AS(pretrain(cfg, train, test, generate_bank(8, 5, 0), hooks), ConfigError);
  CHECK_THROWS_AS(pretrain(cfg, Dataset{}, test, generate_bank(8, 4, 0), hooks), ConfigError);
  cfg.in_channels = 2;
  CHECK_THROWS_AS(pretrain(cfg, train, test, generate_bank(8, 4, 0), hooks), Error);
  cfg = small_pretrain();
  cfg.grid.cube = {24, 24, 24};
  CHECK_THROWS_AS(pretrain(cfg, train, test, generate_bank(8, 4, 0), hooks), Error);
  CHECK(steps == 0);
}

TEST_CASE("one fixed batch can be memorized") {
  const auto data = synth(2, 5);
  const auto bank = generate_bank(8, 4, 0);
  GridSpec g;
  g.cube = {16, 16, 16};
  g.gap = 0;
  std::vector<ProxySample> batch;
  for (std::size_t i = 0; i < 2; ++i) batch.push_back(make_proxy_sample(data.get(i)->volume, g, bank, 0.5, i));
  ProxyModel m(BackboneConfig::small(), {8, 4, {16, 16, 16}}, 1);
  OptimizerConfig opt;
  opt.kind = OptimizerKind::adam;
  const auto trace = overfit_one_batch(m, batch, {}, opt, 60);
  REQUIRE(trace.size() == 61);
  CHECK(trace.back() < 0.5 * trace.front());
}

TEST_CASE("fine-tuning: scratch vs checkpoint differ only in the encoder") {
  const auto pt_train = synth(4, 1), pt_test = synth(2, 2);
  const auto bank = generate_bank(8, 4, 0);
  const auto pt = pretrain(small_pretrain(1), pt_train, pt_test, bank);

  const auto train = synth(6, 7), test = synth(4, 8);
  auto cfg = small_finetune(Phase::finetune_cls, 0);
  const auto scratch = finetune(cfg, train, test, nullptr);
  const auto warm = finetune(cfg, train, test, &pt.checkpoint);
  CHECK(scratch.transfer.initialized.empty());
  CHECK(warm.transfer.initialized.size() == 6);
  REQUIRE(scratch.initial.params.size() == warm.initial.params.size());
  for (std::size_t i = 0; i < warm.initial.params.size(); ++i) {
    const auto& s = scratch.initial.params[i];
    const auto& w = warm.initial.params[i];
    if (s.role == Role::encoder) {
      CHECK(w.values == pt.checkpoint.find(w.name)->values);
      CHECK(s.values != w.values);
    } else {
      CHECK(s.values == w.values);
    }
  }
}

TEST_CASE("fine-tuning with a frozen encoder keeps it bit identical") {
  const auto train = synth(6, 7), test = synth(4, 8);
  auto cfg = small_finetune(Phase::finetune_cls, 2);
  cfg.freeze_encoder = true;
  const auto res = finetune(cfg, train, test, nullptr);
  bool head_moved = false;
  for (std::size_t i = 0; i < res.initial.params.size(); ++i) {
    const auto& a = res.initial.params[i];
    const auto& b = res.checkpoint.params[i];
    if (a.role == Role::encoder) CHECK(a.values == b.values);
    else head_moved = head_moved || a.values != b.values;
  }
  CHECK(head_moved);
  CHECK(res.report.records.size() == 3);
  for (const auto& r : res.report.records) {
    CHECK(r["acc"].get<double>() >= 0.0);
    CHECK(r["acc"].get<double>() <= 1.0);
  }
}

TEST_CASE("segmentation fine-tuning reports per-class IoU") {
  const auto train = synth(4, 7), test = synth(2, 8);
  auto cfg = small_finetune(Phase::finetune_seg, 1);
  cfg.input = {16, 16, 16};
  const auto res = finetune(cfg, train, test, nullptr);
  const auto& last = res.report.records.back();
  CHECK(last["per_class_iou"].size() == 2);
  CHECK(last["miou"].get<double>() >= 0.0);
  CHECK(last["miou"].get<double>() <= 1.0);
  CHECK(res.final_metric == last["miou"].get<double>());

  DucSegmenter m(BackboneConfig::small(), 2, 0);
  const std::vector<std::size_t> idx{0, 1};
  const Tensor y = m.forward(stack_volumes(test, idx, cfg.input));
  CHECK(y.shape() == std::vector<std::int64_t>{2, 2, 16, 16, 16});
}

TEST_CASE("fine-tuning refuses an incompatible checkpoint before training") {
  const auto train = synth(4, 7), test = synth(2, 8);
  ModelCheckpoint other;
  other.meta.backbone = BackboneConfig::small();
  other.params.push_back({"enc.s0.c0.weight", Role::encoder, {1, 1, 1, 1, 1}, {0.0f}});
  int steps = 0;
  TrainHooks hooks;
  hooks.on_step = [&](int, long, double) { ++steps; };
  CHECK_THROWS_AS(finetune(small_finetune(), train, test, &other, hooks), TransferError);
  CHECK(steps == 0);
}

TEST_CASE("evaluate_checkpoint rebuilds each model kind") {
  const auto data = synth(4, 1);
  const auto bank = generate_bank(8, 4, 0);
  const auto pt = pretrain(small_pretrain(0), data, data, bank);
  const auto pr = evaluate_checkpoint(pt.checkpoint, data, &bank, small_pretrain());
  CHECK(pr.contains("ordering_acc"));
  CHECK_THROWS(evaluate_checkpoint(pt.checkpoint, data, nullptr, small_pretrain()));

  const auto cls = finetune(small_finetune(Phase::finetune_cls, 0), data, data, nullptr);
  const auto cr = evaluate_checkpoint(cls.checkpoint, data, nullptr, small_finetune());
  CHECK(cr["acc"].get<double>() == doctest::Approx(cls.final_metric));
}

TEST_CASE("strategy comparison contract") {
  const auto pt_train = synth(4, 1), pt_test = synth(2, 2), ft_train = synth(4, 3), ft_test = synth(4, 4);
  const auto bank = generate_bank(8, 4, 0);
  const CompareData data{&pt_train, &pt_test, &ft_train, &ft_test};
  const auto arms = standard_arms(small_pretrain(1), small_finetune(Phase::finetune_cls, 1), {"scratch", "ordering", "rubik"});
  REQUIRE(arms.size() == 3);
  CHECK_FALSE(arms[0].pretrain.has_value());
  CHECK(arms[1].pretrain->loss.beta == 0.0);

  CHECK_THROWS_AS(compare_strategies(arms, {1, 2}, data, bank), ConfigError);
  auto skewed = arms;
  skewed[2].finetune.epochs = 2;
  try {
    compare_strategies(skewed, {1, 2, 3}, data, bank);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("train.epochs") != std::string::npos);
  }

  const auto table = compare_strategies(arms, {1, 2, 3}, data, bank);
  const auto csv = table.to_csv();
  CHECK(csv.rfind("arm,seed,metric,value\n", 0) == 0);
  for (const char* arm : {"scratch", "ordering", "rubik"}) {
    int n = 0;
    double sum = 0;
    for (const auto& r : table.rows)
      if (r.arm == arm && r.seed != "mean" && r.seed != "std") {
        ++n;
        sum += r.value;
        CHECK(r.metric == "acc");
      }
    CHECK(n == 3);
    CHECK(table.mean(arm) == doctest::Approx(sum / 3));
    CHECK(table.stddev(arm) >= 0.0);
  }
}
