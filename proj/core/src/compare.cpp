#include "rubikssl/compare.hpp"

#include <cmath>
#include <sstream>

#include "rubikssl/errors.hpp"

namespace rubikssl {

std::vector<ArmSpec> standard_arms(const TrainConfig& pretrain, const TrainConfig& finetune,
                                   const std::vector<std::string>& names) {
  std::vector<ArmSpec> arms;
  for (const auto& n : names) {
    ArmSpec a{n, finetune, std::nullopt};
    a.finetune.init = "scratch";
    if (n == "ordering") {
      a.pretrain = pretrain;
      a.pretrain->loss.beta = 0.0;
      if (a.pretrain->loss.alpha <= 0.0) a.pretrain->loss.alpha = 1.0;
    } else if (n == "rubik") {
      a.pretrain = pretrain;
    } else if (n != "scratch") {
      throw ConfigError("arms: unknown arm '" + n + "' (scratch, ordering, rubik)");
    }
    arms.push_back(std::move(a));
  }
  return arms;
}

std::string ComparisonTable::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "arm,seed,metric,value\n";
  for (const auto& r : rows) os << r.arm << "," << r.seed << "," << r.metric << "," << r.value << "\n";
  return os.str();
}

double ComparisonTable::mean(const std::string& arm) const {
  for (const auto& r : rows)
    if (r.arm == arm && r.seed == "mean") return r.value;
  throw ArgumentError("no arm '" + arm + "' in the table");
}

double ComparisonTable::stddev(const std::string& arm) const {
  for (const auto& r : rows)
    if (r.arm == arm && r.seed == "std") return r.value;
  throw ArgumentError("no arm '" + arm + "' in the table");
}

namespace {

// Everything except the initialization must agree between arms.
ConfigMap budget_view(TrainConfig c, bool pretrain) {
  c.seed = 0;
  c.init = "scratch";
  if (pretrain) c.loss = {};
  return config_to_map(c);
}

void check_matched(const std::vector<ArmSpec>& arms) {
  if (arms.empty()) throw ConfigError("arms: nothing to compare");
  const auto ref_ft = budget_view(arms.front().finetune, false);
  std::optional<ConfigMap> ref_pt;
  for (const auto& a : arms) {
    if (a.finetune.phase == Phase::pretrain) throw ConfigError("arms." + a.name + ": fine-tune config has phase pretrain");
    const auto ft = budget_view(a.finetune, false);
    for (const auto& [k, v] : ref_ft) {
      if (ft.at(k) != v) {
        throw ConfigError("arms." + a.name + "." + k + ": '" + ft.at(k) + "' differs from '" + v +
                          "' in arm " + arms.front().name + "; budgets must match");
      }
    }
    if (!a.pretrain) continue;
    const auto pt = budget_view(*a.pretrain, true);
    if (!ref_pt) {
      ref_pt = pt;
      continue;
    }
    for (const auto& [k, v] : *ref_pt) {
      if (pt.at(k) != v) {
        throw ConfigError("arms." + a.name + ".pretrain." + k + ": '" + pt.at(k) + "' differs from '" + v +
                          "'; pretraining budgets must match");
      }
    }
  }
}

}  // namespace

ComparisonTable compare_strategies(const std::vector<ArmSpec>& arms, const std::vector<std::uint64_t>& seeds,
                                   const CompareData& data, const PermutationBank& bank, const TrainHooks& hooks) {
  if (seeds.size() < 3) throw ConfigError("seeds: strategy comparison needs at least 3 seeds");
  check_matched(arms);
  if (!data.finetune_train || !data.finetune_test) throw ConfigError("data: fine-tuning splits missing");
  for (const auto& a : arms) {
    if (a.pretrain && (!data.pretrain_train || !data.pretrain_test)) {
      throw ConfigError("data: arm " + a.name + " pretrains but no pretraining data was given");
    }
  }

  const std::string metric = arms.front().finetune.phase == Phase::finetune_seg ? "miou" : "acc";
  ComparisonTable table;
  for (const auto& a : arms) {
    std::vector<double> values;
    for (auto seed : seeds) {
      if (hooks.log) *hooks.log << "compare: arm " << a.name << " seed " << seed << std::endl;
      TrainConfig ft = a.finetune;
      ft.seed = seed;
      FinetuneResult res;
      if (a.pretrain) {
        TrainConfig pt = *a.pretrain;
        pt.seed = seed;
        const auto pre = pretrain(pt, *data.pretrain_train, *data.pretrain_test, bank, hooks);
        res = finetune(ft, *data.finetune_train, *data.finetune_test, &pre.checkpoint, hooks);
        if (res.transfer.initialized.empty()) throw Error("arm " + a.name + ": no encoder weights were transferred");
      } else {
        res = finetune(ft, *data.finetune_train, *data.finetune_test, nullptr, hooks);
        if (!res.transfer.initialized.empty()) throw Error("arm " + a.name + " loaded checkpoint weights");
      }
      values.push_back(res.final_metric);
      table.rows.push_back({a.name, std::to_string(seed), metric, res.final_metric});
    }
    double mean = 0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0;
    for (double v : values) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(values.size() - 1));
    table.rows.push_back({a.name, "mean", metric, mean});
    table.rows.push_back({a.name, "std", metric, sd});
  }
  return table;
}

}  // namespace rubikssl
