#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <atomic>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rubikssl/checkpoint.hpp"
#include "rubikssl/compare.hpp"
#include "rubikssl/config.hpp"
#include "rubikssl/dataset.hpp"
#include "rubikssl/errors.hpp"
#include "rubikssl/permbank.hpp"
#include "rubikssl/synthetic.hpp"
#include "rubikssl/trainer.hpp"

#ifndef RUBIKSSL_VERSION
#define RUBIKSSL_VERSION "dev"
#endif

namespace rubikssl::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct UsageError : Error {
  using Error::Error;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  bool dry_run = false;
  std::string out;
  std::string config;
  std::vector<std::string> sets;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << s;
  if (!out) throw IoError("write failed for " + p.string());
}

std::vector<std::int64_t> parse_ints(const std::string& what, const std::string& text) {
  std::vector<std::int64_t> v;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t pos = 0;
      v.push_back(std::stoll(part, &pos));
      if (pos != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw UsageError(what + ": '" + text + "' is not a comma-separated integer list");
    }
  }
  return v;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> v;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ','))
    if (!part.empty()) v.push_back(part);
  return v;
}

const std::string& require_out(const Globals& g) {
  if (g.out.empty()) throw UsageError("--out is required");
  return g.out;
}

// Run directories are append-only: a rerun needs a fresh directory.
fs::path open_run_dir(const Globals& g) {
  const fs::path dir = require_out(g);
  if (fs::exists(dir) && !(fs::is_directory(dir) && fs::is_empty(dir))) {
    throw UsageError("output directory " + dir.string() + " already exists and is not empty; use a new one");
  }
  fs::create_directories(dir);
  return dir;
}

class RunRecord {
 public:
  RunRecord(std::string command, const ConfigMap& resolved, std::optional<std::uint64_t> seed)
      : command_(std::move(command)), resolved_(resolved), seed_(seed), started_(utc_now()) {}

  void output(const fs::path& p) { outputs_.push_back(p.filename().string()); }

  void write(const fs::path& dir) const {
    ordered_json j;
    j["command"] = command_;
    j["resolved_config"] = ordered_json::object();
    for (const auto& [k, v] : resolved_) j["resolved_config"][k] = v;
    j["config_hash"] = config_hash(resolved_);
    j["code_version"] = RUBIKSSL_VERSION;
    j["seed"] = seed_ ? ordered_json(*seed_) : ordered_json(nullptr);
    j["started"] = started_;
    j["finished"] = utc_now();
    j["outputs"] = outputs_;
    write_text(dir / "run.json", j.dump(2) + "\n");
  }

 private:
  std::string command_;
  ConfigMap resolved_;
  std::optional<std::uint64_t> seed_;
  std::string started_;
  std::vector<std::string> outputs_;
};

// Defaults < config file < --set < dedicated flags.
TrainConfig resolve(Phase phase, const std::string& config_file, const std::vector<std::string>& sets,
                    ConfigMap flags, const Globals& g) {
  const ConfigMap defaults = config_to_map(default_config(phase));
  ConfigMap file;
  if (!config_file.empty()) file = load_config(config_file);
  const ConfigMap over = parse_overrides(sets);
  for (const ConfigMap* m : std::initializer_list<const ConfigMap*>{&file, &over}) {
    const auto it = m->find("phase");
    if (it != m->end() && it->second != to_string(phase)) {
      throw ConfigError("phase: '" + it->second + "' conflicts with this command (" + to_string(phase) + ")");
    }
  }
  if (g.seed) flags["seed"] = std::to_string(*g.seed);
  if (g.deterministic) flags["deterministic"] = "true";
  const ConfigMap merged = merge({&defaults, &file, &over, &flags});
  return config_from_map(merged);
}

bool dry_run(const Globals& g, const ConfigMap& resolved, std::ostream& out) {
  if (!g.dry_run) return false;
  out << render_config(resolved) << "# config_hash = " << config_hash(resolved) << "\n";
  return true;
}

fs::path manifest_path(const std::string& data) {
  if (data.empty()) throw UsageError("--data is required");
  fs::path p = data;
  if (fs::is_directory(p)) p /= "manifest.jsonl";
  if (!fs::exists(p)) throw IoError("no manifest at " + p.string());
  return p;
}

Dataset open_dataset(const DatasetManifest& m) {
  if (m.entries.empty()) return Dataset::from_manifest(m);
  // Keep at most ~1 GiB of voxels resident; larger sets stream from disk.
  const auto first = load_volume(m.entries.front().volume_path);
  const bool resident = static_cast<double>(first.shape().numel()) * static_cast<double>(m.entries.size()) <= 268435456.0;
  return Dataset::from_manifest(m, resident);
}

struct Splits {
  Dataset train, test;
};

Splits load_splits(const std::string& data, const TrainConfig& cfg) {
  const auto manifest = load_manifest(manifest_path(data));
  auto [tr, te] = split_dataset(manifest.entries, cfg.split_ratio, cfg.split_seed);
  return {open_dataset(tr), open_dataset(te)};
}

Phase task_phase(const std::string& task) {
  if (task == "cls") return Phase::finetune_cls;
  if (task == "seg") return Phase::finetune_seg;
  throw UsageError("--task must be cls or seg, got '" + task + "'");
}

int cmd_gen_synth(const Globals& g, std::int64_t n, const std::string& dims_text, int classes,
                  const SyntheticOptions& opt, std::ostream& out, std::ostream& err) {
  const auto dims = parse_ints("--dims", dims_text);
  if (dims.size() != 4) throw UsageError("--dims needs C,X,Y,Z");
  const Shape4 shape{dims[0], dims[1], dims[2], dims[3]};
  const std::uint64_t seed = g.seed.value_or(0);
  if (opt.landmarks < 0) throw UsageError("--landmarks must be >= 0");
  if (!(opt.blob_radius_min > 0.0 && opt.blob_radius_min <= opt.blob_radius_max && opt.blob_radius_max < 0.5))
    throw UsageError("--blob-radius needs 0 < min <= max < 0.5");
  const SyntheticGenerator gen(n, shape, classes, seed, opt);
  const ConfigMap resolved{{"n", std::to_string(n)},
                           {"dims", dims_text},
                           {"classes", std::to_string(classes)},
                           {"seed", std::to_string(seed)},
                           {"landmarks", std::to_string(opt.landmarks)},
                           {"ramp_scale", std::to_string(opt.ramp_scale)},
                           {"blob_radius", std::to_string(opt.blob_radius_min) + "," + std::to_string(opt.blob_radius_max)},
                           {"blob_amplitude", std::to_string(opt.blob_amplitude)}};
  if (dry_run(g, resolved, out)) return kExitOk;
  const fs::path dir = open_run_dir(g);
  RunRecord run("gen-synth", resolved, seed);

  DatasetManifest manifest;
  manifest.seed = seed;
  manifest.entries.resize(static_cast<std::size_t>(n));
  auto name = [](const char* stem, std::int64_t i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%05lld.rv01", stem, static_cast<long long>(i));
    return std::string(buf);
  };
  std::atomic<std::int64_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto work = [&] {
    for (std::int64_t i; (i = next++) < n;) {
      try {
        const LabeledVolume lv = gen.make(i);
        const fs::path vp = dir / name("vol", i), mp = dir / name("mask", i);
        save_volume(lv.volume, vp);
        save_mask(*lv.seg_mask, mp);
        manifest.entries[static_cast<std::size_t>(i)] = {vp, lv.class_label, mp};
      } catch (...) {
        std::lock_guard lk(mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const unsigned nthreads = std::clamp(std::thread::hardware_concurrency(), 1u, 16u);
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  save_manifest(manifest, dir / "manifest.jsonl");
  run.output(dir / "manifest.jsonl");
  run.write(dir);
  std::vector<int> counts(static_cast<std::size_t>(classes));
  for (std::int64_t i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(gen.class_of(i))];
  out << "wrote " << n << " volumes of shape " << to_string(shape) << " to " << dir.string() << "\n";
  for (int c = 0; c < classes; ++c) out << "  class " << c << ": " << counts[static_cast<std::size_t>(c)] << "\n";
  err << "gen-synth done\n";
  return kExitOk;
}

int cmd_permbank(const Globals& g, int m, int k, bool sampled, std::size_t pool, std::ostream& out,
                 std::ostream& err) {
  const std::uint64_t seed = g.seed.value_or(0);
  const fs::path path = require_out(g);
  if (g.dry_run) {
    out << "M = " << m << "\nK = " << k << "\nseed = " << seed << "\nmode = " << (sampled ? "sampled" : "enumerated")
        << "\nout = " << path.string() << "\n";
    return kExitOk;
  }
  const auto t0 = std::chrono::steady_clock::now();
  const PermutationBank bank = sampled ? generate_bank_sampled(m, k, seed, pool) : generate_bank(m, k, seed);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_bank(bank, path);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out << "bank M=" << m << " K=" << k << " min pairwise distance " << bank.min_pairwise_distance << " hash "
      << bank_hash(bank) << "\n";
  err << "permbank done in " << secs << " s\n";
  return kExitOk;
}

int cmd_pretrain(const Globals& g, const std::string& data, const std::string& bank_path, std::ostream& out,
                 std::ostream& err) {
  const TrainConfig cfg = resolve(Phase::pretrain, g.config, g.sets, {}, g);
  const ConfigMap resolved = config_to_map(cfg);
  if (bank_path.empty()) throw UsageError("--bank is required");
  const PermutationBank bank = load_bank(bank_path);
  const auto manifest = manifest_path(data);
  if (dry_run(g, resolved, out)) return kExitOk;
  const fs::path dir = open_run_dir(g);
  RunRecord run("pretrain", resolved, cfg.seed);
  write_text(dir / "config.cfg", render_config(resolved));
  run.output(dir / "config.cfg");

  const Splits s = load_splits(manifest.string(), cfg);
  TrainHooks hooks;
  hooks.log = &err;
  const auto res = pretrain(cfg, s.train, s.test, bank, hooks);
  save_checkpoint(res.checkpoint, dir / "ckpt.rc01");
  res.report.save(dir / "metrics.jsonl");
  run.output(dir / "ckpt.rc01");
  run.output(dir / "metrics.jsonl");
  run.write(dir);
  const auto& last = res.report.records.back();
  out << "ordering_acc " << last["ordering_acc"].get<double>() << " orientation_acc "
      << last["orientation_acc"].get<double>() << "\n";
  return kExitOk;
}

int cmd_finetune(const Globals& g, const std::string& task, const std::string& init, const std::string& data,
                 std::ostream& out, std::ostream& err) {
  ConfigMap flags;
  if (!init.empty()) flags["init"] = init;
  const TrainConfig cfg = resolve(task_phase(task), g.config, g.sets, flags, g);
  const ConfigMap resolved = config_to_map(cfg);
  const auto manifest = manifest_path(data);
  if (dry_run(g, resolved, out)) return kExitOk;
  const fs::path dir = open_run_dir(g);
  RunRecord run("finetune", resolved, cfg.seed);
  write_text(dir / "config.cfg", render_config(resolved));
  run.output(dir / "config.cfg");

  const Splits s = load_splits(manifest.string(), cfg);
  TrainHooks hooks;
  hooks.log = &err;
  const auto res = finetune(cfg, s.train, s.test, hooks);
  save_checkpoint(res.checkpoint, dir / "ckpt.rc01");
  res.report.save(dir / "metrics.jsonl");
  run.output(dir / "ckpt.rc01");
  run.output(dir / "metrics.jsonl");
  run.write(dir);
  out << (cfg.phase == Phase::finetune_seg ? "miou " : "acc ") << res.final_metric << "\n";
  return kExitOk;
}

int cmd_eval(const Globals& g, const std::string& ckpt_path, const std::string& data, const std::string& bank_path,
             const std::string& split, std::ostream& out, std::ostream&) {
  if (ckpt_path.empty()) throw UsageError("--ckpt is required");
  const ModelCheckpoint ck = load_checkpoint(ckpt_path);
  const Phase phase = ck.meta.kind == "proxy"        ? Phase::pretrain
                      : ck.meta.kind == "classifier" ? Phase::finetune_cls
                                                     : Phase::finetune_seg;
  ConfigMap flags{{"model.backbone", to_string(ck.meta.backbone)},
                  {"model.in_channels", std::to_string(ck.meta.backbone.in_channels)}};
  if (phase != Phase::pretrain) flags["task.num_classes"] = std::to_string(ck.meta.num_classes);
  else {
    flags["proxy.perms"] = std::to_string(ck.meta.perms);
    flags["grid.cube"] = std::to_string(ck.meta.cube[0]) + "," + std::to_string(ck.meta.cube[1]) + "," +
                         std::to_string(ck.meta.cube[2]);
  }
  const TrainConfig cfg = resolve(phase, g.config, g.sets, flags, g);
  ConfigMap resolved = config_to_map(cfg);
  resolved["eval.split"] = split;
  resolved["eval.checkpoint"] = ckpt_path;
  if (split != "test" && split != "train" && split != "all") throw UsageError("--split must be test, train or all");
  std::optional<PermutationBank> bank;
  if (!bank_path.empty()) bank = load_bank(bank_path);
  const auto manifest = manifest_path(data);
  if (dry_run(g, resolved, out)) return kExitOk;
  const fs::path dir = open_run_dir(g);
  RunRecord run("eval", resolved, cfg.seed);

  Dataset ds;
  if (split == "all") ds = open_dataset(load_manifest(manifest));
  else {
    Splits s = load_splits(manifest.string(), cfg);
    ds = split == "test" ? s.test : s.train;
  }
  auto rec = evaluate_checkpoint(ck, ds, bank ? &*bank : nullptr, cfg);
  rec["split"] = split;
  rec["config_hash"] = config_hash(resolved);
  write_text(dir / "eval.json", rec.dump() + "\n");
  run.output(dir / "eval.json");
  run.write(dir);
  out << rec.dump() << "\n";
  return kExitOk;
}

int cmd_compare(const Globals& g, const std::string& task, const std::string& arms_text, const std::string& seeds_text,
                const std::string& data, const std::string& pretrain_data, const std::string& bank_path,
                const std::string& pretrain_config, const std::vector<std::string>& pretrain_sets, std::ostream& out,
                std::ostream& err) {
  const TrainConfig ft = resolve(task_phase(task), g.config, g.sets, {}, g);
  const TrainConfig pt = resolve(Phase::pretrain, pretrain_config, pretrain_sets, {}, g);
  const auto arm_names = split_list(arms_text);
  std::vector<std::uint64_t> seeds;
  for (auto s : parse_ints("--seeds", seeds_text)) seeds.push_back(static_cast<std::uint64_t>(s));
  const auto arms = standard_arms(pt, ft, arm_names);

  ConfigMap resolved;
  for (const auto& [k, v] : config_to_map(ft)) resolved["finetune." + k] = v;
  for (const auto& [k, v] : config_to_map(pt)) resolved["pretrain." + k] = v;
  resolved["compare.arms"] = arms_text;
  resolved["compare.seeds"] = seeds_text;
  const bool any_pretrain = std::any_of(arms.begin(), arms.end(), [](const ArmSpec& a) { return a.pretrain.has_value(); });
  if (any_pretrain && bank_path.empty()) throw UsageError("--bank is required for pretrained arms");
  const auto manifest = manifest_path(data);
  if (dry_run(g, resolved, out)) return kExitOk;
  if (seeds.size() < 3) throw ConfigError("seeds: strategy comparison needs at least 3 seeds");
  const fs::path dir = open_run_dir(g);
  RunRecord run("compare", resolved, g.seed);

  PermutationBank bank;
  if (any_pretrain) bank = load_bank(bank_path);
  const Splits fs_ = load_splits(manifest.string(), ft);
  std::optional<Splits> ps;
  if (!pretrain_data.empty()) ps = load_splits(manifest_path(pretrain_data).string(), pt);
  CompareData cd;
  cd.finetune_train = &fs_.train;
  cd.finetune_test = &fs_.test;
  // Without separate pretraining data the proxy task sees the same volumes,
  // never their labels.
  cd.pretrain_train = ps ? &ps->train : &fs_.train;
  cd.pretrain_test = ps ? &ps->test : &fs_.test;
  TrainHooks hooks;
  hooks.log = &err;
  const auto table = compare_strategies(arms, seeds, cd, bank, hooks);
  write_text(dir / "comparison.csv", table.to_csv());
  run.output(dir / "comparison.csv");
  run.write(dir);
  for (const auto& a : arm_names) out << a << ": " << table.mean(a) << " +- " << table.stddev(a) << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rubik's cube recovery pretraining for volumetric encoders", "rubikssl"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Base seed");
  app.add_flag("--deterministic", g.deterministic, "Single-threaded data generation, zero wall-clock fields");
  app.add_flag("--dry-run", g.dry_run, "Print the resolved configuration and exit");
  app.add_option("--out", g.out, "Output directory (file for permbank)");
  app.add_option("--config", g.config, "key = value configuration file");
  app.add_option("--set", g.sets, "Override one key: --set optim.lr=0.01");

  std::int64_t n = 0;
  std::string dims;
  int classes = 2;
  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic labelled dataset");
  gen->add_option("--n", n, "Number of volumes")->required();
  gen->add_option("--dims", dims, "C,X,Y,Z")->required();
  gen->add_option("--classes", classes, "Number of classes")->required();
  SyntheticOptions synth;
  std::vector<double> blob_radius;
  gen->add_option("--landmarks", synth.landmarks, "Fixed landmark structures per volume (0 = none)");
  gen->add_option("--ramp-scale", synth.ramp_scale, "Multiplier on the background ramp slopes");
  gen->add_option("--blob-radius", blob_radius, "Blob radius range as a fraction of the extent: MIN,MAX")
      ->delimiter(',')
      ->expected(2);
  gen->add_option("--blob-amplitude", synth.blob_amplitude, "Blob intensity amplitude");

  int m = 8, k = 100;
  bool sampled = false;
  std::size_t pool = kDefaultSamplingPool;
  auto* pb = app.add_subcommand("permbank", "Generate a permutation bank");
  pb->add_option("--m", m, "Cubes per sample")->required();
  pb->add_option("--k", k, "Bank size")->required();
  pb->add_flag("--sampled", sampled, "Select from a random pool instead of all M! permutations");
  pb->add_option("--pool", pool, "Pool size in sampled mode");

  std::string data, bank, task, init, ckpt, split = "test", arms = "scratch,ordering,rubik", seeds = "1,2,3";
  std::string pretrain_data, pretrain_config;
  std::vector<std::string> pretrain_sets;
  auto* pre = app.add_subcommand("pretrain", "Pretrain an encoder on the proxy task");
  pre->add_option("--data", data, "Dataset directory or manifest")->required();
  pre->add_option("--bank", bank, "Permutation bank JSON")->required();

  auto* ft = app.add_subcommand("finetune", "Fine-tune on classification or segmentation");
  ft->add_option("--task", task, "cls or seg")->required();
  ft->add_option("--init", init, "Checkpoint whose encoder initializes the model");
  ft->add_option("--data", data, "Dataset directory or manifest")->required();

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--ckpt", ckpt, "Checkpoint")->required();
  ev->add_option("--data", data, "Dataset directory or manifest")->required();
  ev->add_option("--bank", bank, "Permutation bank (proxy checkpoints)");
  ev->add_option("--split", split, "test, train or all");

  auto* cmp = app.add_subcommand("compare", "Compare initialization strategies over seeds");
  cmp->add_option("--task", task, "cls or seg")->default_val("cls");
  cmp->add_option("--arms", arms, "Comma-separated arms")->default_val("scratch,ordering,rubik");
  cmp->add_option("--seeds", seeds, "Comma-separated seeds (at least 3)")->default_val("1,2,3");
  cmp->add_option("--data", data, "Labelled dataset directory or manifest")->required();
  cmp->add_option("--pretrain-data", pretrain_data, "Unlabelled pretraining data (defaults to --data)");
  cmp->add_option("--bank", bank, "Permutation bank JSON");
  cmp->add_option("--pretrain-config", pretrain_config, "Pretraining configuration file");
  cmp->add_option("--pretrain-set", pretrain_sets, "Override one pretraining key");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      if (!blob_radius.empty()) {
        synth.blob_radius_min = blob_radius[0];
        synth.blob_radius_max = blob_radius[1];
      }
      return cmd_gen_synth(g, n, dims, classes, synth, out, err);
    }
    if (*pb) return cmd_permbank(g, m, k, sampled, pool, out, err);
    if (*pre) return cmd_pretrain(g, data, bank, out, err);
    if (*ft) return cmd_finetune(g, task, init, data, out, err);
    if (*ev) return cmd_eval(g, ckpt, data, bank, split, out, err);
    if (*cmp) {
      return cmd_compare(g, task, arms, seeds, data, pretrain_data, bank, pretrain_config, pretrain_sets, out, err);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace rubikssl::cli
