#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "rubikssl/volume.hpp"

namespace rubikssl {

enum class Split { all, train, test };

const char* to_string(Split s);

struct DatasetEntry {
  std::filesystem::path volume_path;
  std::optional<int> class_label;
  std::optional<std::filesystem::path> mask_path;

  friend bool operator==(const DatasetEntry&, const DatasetEntry&) = default;
};

struct DatasetManifest {
  std::vector<DatasetEntry> entries;
  Split split = Split::all;
  std::uint64_t seed = 0;
};

/// Reads a JSON-lines manifest. Relative paths are resolved against the
/// manifest's directory; every referenced file must exist (IoError otherwise).
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Writes one JSON object per entry. Paths under the manifest's directory are
/// stored relative to it.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Index-level split: |train| = round(ratio * n), disjoint, exhaustive and a
/// pure function of (n, ratio, seed). Indices come back sorted.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double ratio,
                                                                           std::uint64_t seed);

/// Throws ConfigError when entries.size() < 2 or ratio is outside (0, 1).
std::pair<DatasetManifest, DatasetManifest> split_dataset(const std::vector<DatasetEntry>& entries, double ratio,
                                                          std::uint64_t seed);

/// Read-only collection of labelled volumes, intensity-normalized on access.
/// Either fully resident or loaded from disk on every access; in both cases
/// instances are immutable and safe to share between threads.
class Dataset {
 public:
  Dataset() = default;
  static Dataset from_memory(std::vector<LabeledVolume> items, bool normalize = true);
  static Dataset from_manifest(const DatasetManifest& manifest, bool resident = true, bool normalize = true);

  std::size_t size() const { return resident_ ? items_.size() : entries_.size(); }
  std::shared_ptr<const LabeledVolume> get(std::size_t i) const;
  std::optional<int> class_label(std::size_t i) const;
  Dataset subset(std::span<const std::size_t> indices) const;

 private:
  bool resident_ = true;
  bool normalize_ = true;
  std::vector<std::shared_ptr<const LabeledVolume>> items_;
  std::vector<DatasetEntry> entries_;
};

LabeledVolume load_entry(const DatasetEntry& entry);

}  // namespace rubikssl
