#include "rubikssl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "rubikssl/errors.hpp"
#include "rubikssl/rng.hpp"

namespace rubikssl {

namespace fs = std::filesystem;

const char* to_string(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::test:
      return "test";
    case Split::all:
      break;
  }
  return "all";
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path q(p);
    return q.is_absolute() ? q : base / q;
  };

  DatasetManifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    DatasetEntry e;
    try {
      const auto j = nlohmann::json::parse(line);
      e.volume_path = resolve(j.at("volume").get<std::string>());
      if (j.contains("class_label") && !j["class_label"].is_null()) e.class_label = j["class_label"].get<int>();
      if (j.contains("mask") && !j["mask"].is_null()) e.mask_path = resolve(j["mask"].get<std::string>());
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
    if (!fs::exists(e.volume_path)) throw IoError("manifest references missing file " + e.volume_path.string());
    if (e.mask_path && !fs::exists(*e.mask_path)) {
      throw IoError("manifest references missing file " + e.mask_path->string());
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  // Entries are taken relative to the working directory; anything under the
  // manifest's directory is stored relative to it, everything else absolute.
  const fs::path base = fs::absolute(path).lexically_normal().parent_path();
  auto rel = [&](const fs::path& p) {
    const fs::path a = fs::absolute(p).lexically_normal();
    const auto r = a.lexically_relative(base);
    return (r.empty() || *r.begin() == "..") ? a.generic_string() : r.generic_string();
  };
  for (const auto& e : manifest.entries) {
    nlohmann::ordered_json j;
    j["volume"] = rel(e.volume_path);
    j["class_label"] = e.class_label ? nlohmann::ordered_json(*e.class_label) : nlohmann::ordered_json(nullptr);
    j["mask"] = e.mask_path ? nlohmann::ordered_json(rel(*e.mask_path)) : nlohmann::ordered_json(nullptr);
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double ratio,
                                                                           std::uint64_t seed) {
  if (n < 2) throw ConfigError("cannot split fewer than 2 entries");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie strictly between 0 and 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {0x5b117ULL}));
  rng.shuffle(std::span<std::size_t>(order));
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

std::pair<DatasetManifest, DatasetManifest> split_dataset(const std::vector<DatasetEntry>& entries, double ratio,
                                                          std::uint64_t seed) {
  const auto [tr, te] = split_indices(entries.size(), ratio, seed);
  DatasetManifest train{{}, Split::train, seed};
  DatasetManifest test{{}, Split::test, seed};
  for (auto i : tr) train.entries.push_back(entries[i]);
  for (auto i : te) test.entries.push_back(entries[i]);
  return {std::move(train), std::move(test)};
}

LabeledVolume load_entry(const DatasetEntry& entry) {
  LabeledVolume lv;
  lv.volume = load_volume(entry.volume_path);
  lv.class_label = entry.class_label;
  if (entry.mask_path) {
    lv.seg_mask = load_mask(*entry.mask_path);
    const auto& s = lv.volume.shape();
    if (lv.seg_mask->x != s.x || lv.seg_mask->y != s.y || lv.seg_mask->z != s.z) {
      throw ValidationError("mask " + entry.mask_path->string() + " does not match volume shape " + to_string(s));
    }
  }
  return lv;
}

namespace {

LabeledVolume prepare(LabeledVolume lv, bool normalize) {
  if (normalize) lv.volume = normalize_intensity(lv.volume);
  return lv;
}

}  // namespace

Dataset Dataset::from_memory(std::vector<LabeledVolume> items, bool normalize) {
  Dataset d;
  d.resident_ = true;
  d.normalize_ = normalize;
  d.items_.reserve(items.size());
  for (auto& it : items) d.items_.push_back(std::make_shared<const LabeledVolume>(prepare(std::move(it), normalize)));
  return d;
}

Dataset Dataset::from_manifest(const DatasetManifest& manifest, bool resident, bool normalize) {
  Dataset d;
  d.resident_ = resident;
  d.normalize_ = normalize;
  if (resident) {
    for (const auto& e : manifest.entries) {
      d.items_.push_back(std::make_shared<const LabeledVolume>(prepare(load_entry(e), normalize)));
    }
  } else {
    d.entries_ = manifest.entries;
  }
  return d;
}

std::shared_ptr<const LabeledVolume> Dataset::get(std::size_t i) const {
  if (i >= size()) throw ArgumentError("dataset index out of range");
  if (resident_) return items_[i];
  return std::make_shared<const LabeledVolume>(prepare(load_entry(entries_[i]), normalize_));
}

std::optional<int> Dataset::class_label(std::size_t i) const {
  if (i >= size()) throw ArgumentError("dataset index out of range");
  return resident_ ? items_[i]->class_label : entries_[i].class_label;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset d;
  d.resident_ = resident_;
  d.normalize_ = normalize_;
  for (auto i : indices) {
    if (i >= size()) throw ArgumentError("dataset index out of range");
    if (resident_) {
      d.items_.push_back(items_[i]);
    } else {
      d.entries_.push_back(entries_[i]);
    }
  }
  return d;
}

}  // namespace rubikssl
