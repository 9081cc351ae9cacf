#include "rubikssl/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rubikssl/errors.hpp"

namespace rubikssl {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(const Shape4& s) {
  std::ostringstream os;
  os << "(" << s.c << "," << s.x << "," << s.y << "," << s.z << ")";
  return os.str();
}

Volume::Volume(Shape4 shape, std::vector<float> data, std::array<double, 3> spacing,
               std::vector<std::string> modality_names)
    : shape_(shape), data_(std::move(data)), spacing_(spacing), modalities_(std::move(modality_names)) {
  if (shape_.c < 1 || shape_.x < 1 || shape_.y < 1 || shape_.z < 1) {
    throw ValidationError("volume shape must be positive, got " + to_string(shape_));
  }
  if (static_cast<std::int64_t>(data_.size()) != shape_.numel()) {
    throw ValidationError("volume data has " + std::to_string(data_.size()) + " values, shape " +
                          to_string(shape_) + " needs " + std::to_string(shape_.numel()));
  }
  for (double s : spacing_) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ValidationError("volume spacing must be positive");
  }
  if (modalities_.empty()) {
    for (std::int64_t c = 0; c < shape_.c; ++c) modalities_.push_back("ch" + std::to_string(c));
  }
  if (static_cast<std::int64_t>(modalities_.size()) != shape_.c) {
    throw ValidationError("expected " + std::to_string(shape_.c) + " modality names, got " +
                          std::to_string(modalities_.size()));
  }
}

std::optional<std::int64_t> Volume::first_non_finite() const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) return static_cast<std::int64_t>(i);
  }
  return std::nullopt;
}

namespace {

constexpr const char* kMagic = "RV01";

struct Header {
  std::string dtype;
  Shape4 shape;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::vector<std::string> modalities;
};

std::size_t dtype_size(const std::string& dtype) { return dtype == "u8" ? 1 : 4; }

std::string index_string(const Shape4& s, std::int64_t flat) {
  const std::int64_t z = flat % s.z;
  const std::int64_t y = (flat / s.z) % s.y;
  const std::int64_t x = (flat / (s.z * s.y)) % s.x;
  const std::int64_t c = flat / s.spatial();
  return to_string(Shape4{c, x, y, z});
}

// Reads header + raw payload bytes, validating only the container.
std::pair<Header, std::vector<char>> read_container(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing RV01 header line");

  Header h;
  try {
    const json j = json::parse(line);
    if (!j.is_object() || j.value("magic", "") != kMagic) {
      throw FormatError(path.string() + ": bad magic, expected RV01");
    }
    h.dtype = j.at("dtype").get<std::string>();
    if (h.dtype != "f32" && h.dtype != "u8") throw FormatError(path.string() + ": unsupported dtype " + h.dtype);
    const auto shape = j.at("shape").get<std::vector<std::int64_t>>();
    if (shape.size() != 4) throw FormatError(path.string() + ": shape must have 4 entries");
    h.shape = {shape[0], shape[1], shape[2], shape[3]};
    if (h.shape.c < 1 || h.shape.x < 1 || h.shape.y < 1 || h.shape.z < 1) {
      throw FormatError(path.string() + ": non-positive shape " + to_string(h.shape));
    }
    if (j.contains("spacing")) {
      const auto sp = j.at("spacing").get<std::vector<double>>();
      if (sp.size() != 3) throw FormatError(path.string() + ": spacing must have 3 entries");
      h.spacing = {sp[0], sp[1], sp[2]};
    }
    if (j.contains("modalities")) h.modalities = j.at("modalities").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": malformed RV01 header: " + e.what());
  }

  const std::size_t expected = static_cast<std::size_t>(h.shape.numel()) * dtype_size(h.dtype);
  std::vector<char> payload(expected);
  in.read(payload.data(), static_cast<std::streamsize>(expected));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != expected) {
    throw CorruptionError(path.string() + ": payload has " + std::to_string(got) + " bytes, header " +
                          to_string(h.shape) + " requires " + std::to_string(expected));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CorruptionError(path.string() + ": trailing bytes after payload of shape " + to_string(h.shape));
  }
  return {std::move(h), std::move(payload)};
}

void write_container(const fs::path& path, const nlohmann::ordered_json& header, const char* bytes, std::size_t nbytes) {
  // Write next to the target and rename so a failed write never leaves a
  // half-written container behind.
  fs::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    const std::string line = header.dump() + "\n";
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.write(bytes, static_cast<std::streamsize>(nbytes));
    if (!out) throw IoError("write failed for " + path.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::vector<float> floats_from_le(const std::vector<char>& bytes) {
  std::vector<float> out(bytes.size() / 4);
  std::memcpy(out.data(), bytes.data(), out.size() * 4);
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& f : out) f = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(f)));
  }
  return out;
}

std::vector<char> floats_to_le(std::span<const float> values) {
  std::vector<char> out(values.size() * 4);
  std::memcpy(out.data(), values.data(), out.size());
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto w = __builtin_bswap32(std::bit_cast<std::uint32_t>(values[i]));
      std::memcpy(out.data() + i * 4, &w, 4);
    }
  }
  return out;
}

}  // namespace

Volume load_volume(const fs::path& path) {
  auto [h, payload] = read_container(path);
  if (h.dtype != "f32") throw FormatError(path.string() + ": expected dtype f32, got " + h.dtype);
  std::vector<float> data = floats_from_le(payload);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw ValidationError(path.string() + ": non-finite voxel at (c,x,y,z)=" +
                            index_string(h.shape, static_cast<std::int64_t>(i)));
    }
  }
  try {
    return Volume(h.shape, std::move(data), h.spacing, std::move(h.modalities));
  } catch (const ValidationError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_volume(const Volume& v, const fs::path& path) {
  if (const auto bad = v.first_non_finite()) {
    throw ValidationError("refusing to save " + path.string() + ": non-finite voxel at (c,x,y,z)=" +
                          index_string(v.shape(), *bad));
  }
  nlohmann::ordered_json header;
  header["magic"] = kMagic;
  header["dtype"] = "f32";
  const auto& s = v.shape();
  header["shape"] = {s.c, s.x, s.y, s.z};
  header["spacing"] = {v.spacing()[0], v.spacing()[1], v.spacing()[2]};
  header["modalities"] = v.modality_names();
  const auto bytes = floats_to_le(v.data());
  write_container(path, header, bytes.data(), bytes.size());
}

Mask load_mask(const fs::path& path) {
  auto [h, payload] = read_container(path);
  if (h.dtype != "u8") throw FormatError(path.string() + ": expected dtype u8, got " + h.dtype);
  if (h.shape.c != 1) throw FormatError(path.string() + ": mask must have one channel");
  Mask m{h.shape.x, h.shape.y, h.shape.z, {}};
  m.labels.assign(payload.begin(), payload.end());
  return m;
}

void save_mask(const Mask& m, const fs::path& path) {
  if (static_cast<std::int64_t>(m.labels.size()) != m.numel() || m.numel() < 1) {
    throw ValidationError("mask label count does not match its shape");
  }
  nlohmann::ordered_json header;
  header["magic"] = kMagic;
  header["dtype"] = "u8";
  header["shape"] = {std::int64_t{1}, m.x, m.y, m.z};
  header["spacing"] = {1.0, 1.0, 1.0};
  header["modalities"] = {"mask"};
  write_container(path, header, reinterpret_cast<const char*>(m.labels.data()), m.labels.size());
}

Volume normalize_intensity(const Volume& v) {
  const auto& s = v.shape();
  std::vector<float> out(static_cast<std::size_t>(s.numel()));
  for (std::int64_t c = 0; c < s.c; ++c) {
    const auto ch = v.channel(c);
    double sum = 0.0;
    for (float x : ch) sum += x;
    const double mean = sum / static_cast<double>(ch.size());
    double max_dev = 0.0;
    for (float x : ch) max_dev = std::max(max_dev, std::abs(static_cast<double>(x) - mean));
    const double scale = 1.0 / (max_dev + kNormalizeEpsilon);
    float* dst = out.data() + c * s.spatial();
    for (std::size_t i = 0; i < ch.size(); ++i) {
      const double y = (static_cast<double>(ch[i]) - mean) * scale;
      dst[i] = static_cast<float>(std::clamp(y, -1.0, 1.0));
    }
  }
  return Volume(s, std::move(out), v.spacing(), v.modality_names());
}

namespace {

// Offset of the crop window along one axis; negative means padding.
std::int64_t crop_start(std::int64_t have, std::int64_t want) { return (have - want) / 2; }

}  // namespace

Volume center_crop(const Volume& v, std::int64_t x, std::int64_t y, std::int64_t z) {
  if (x < 1 || y < 1 || z < 1) throw ArgumentError("crop extent must be positive");
  const auto& s = v.shape();
  const Shape4 o{s.c, x, y, z};
  const std::int64_t ox = crop_start(s.x, x), oy = crop_start(s.y, y), oz = crop_start(s.z, z);
  std::vector<float> out(static_cast<std::size_t>(o.numel()), 0.0f);
  for (std::int64_t c = 0; c < s.c; ++c)
    for (std::int64_t i = 0; i < x; ++i)
      for (std::int64_t j = 0; j < y; ++j)
        for (std::int64_t k = 0; k < z; ++k) {
          const std::int64_t si = i + ox, sj = j + oy, sk = k + oz;
          if (si < 0 || sj < 0 || sk < 0 || si >= s.x || sj >= s.y || sk >= s.z) continue;
          out[static_cast<std::size_t>(o.index(c, i, j, k))] = v.at(c, si, sj, sk);
        }
  return Volume(o, std::move(out), v.spacing(), v.modality_names());
}

Mask center_crop(const Mask& m, std::int64_t x, std::int64_t y, std::int64_t z) {
  if (x < 1 || y < 1 || z < 1) throw ArgumentError("crop extent must be positive");
  const std::int64_t ox = crop_start(m.x, x), oy = crop_start(m.y, y), oz = crop_start(m.z, z);
  Mask out{x, y, z, std::vector<std::uint8_t>(static_cast<std::size_t>(x * y * z), 0)};
  for (std::int64_t i = 0; i < x; ++i)
    for (std::int64_t j = 0; j < y; ++j)
      for (std::int64_t k = 0; k < z; ++k) {
        const std::int64_t si = i + ox, sj = j + oy, sk = k + oz;
        if (si < 0 || sj < 0 || sk < 0 || si >= m.x || sj >= m.y || sk >= m.z) continue;
        out.labels[static_cast<std::size_t>((i * y + j) * z + k)] =
            m.labels[static_cast<std::size_t>((si * m.y + sj) * m.z + sk)];
      }
  return out;
}

}  // namespace rubikssl
