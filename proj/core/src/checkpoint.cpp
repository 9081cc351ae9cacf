#include "rubikssl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "rubikssl/errors.hpp"

namespace rubikssl {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "RC01 payloads are written in host order");

const TensorRecord* ModelCheckpoint::find(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return &p;
  return nullptr;
}

ModelCheckpoint snapshot(const ParamStore& store, CheckpointMeta meta) {
  ModelCheckpoint ck{std::move(meta), {}};
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Param& p = store[i];
    ck.params.push_back({p.name, p.role, p.value.shape(), {p.value.values().begin(), p.value.values().end()}});
  }
  return ck;
}

namespace {

ordered_json meta_to_json(const CheckpointMeta& m) {
  ordered_json j;
  j["kind"] = m.kind;
  j["backbone"] = to_string(m.backbone);
  j["in_channels"] = m.backbone.in_channels;
  j["bank_hash"] = m.bank_hash;
  j["step"] = m.step;
  j["seed"] = m.seed;
  j["num_classes"] = m.num_classes;
  j["cubes"] = m.cubes;
  j["perms"] = m.perms;
  j["cube"] = m.cube;
  return j;
}

CheckpointMeta meta_from_json(const nlohmann::json& j) {
  CheckpointMeta m;
  m.kind = j.at("kind").get<std::string>();
  m.backbone = backbone_from_string(j.at("backbone").get<std::string>(), j.at("in_channels").get<std::int64_t>());
  m.bank_hash = j.at("bank_hash").get<std::string>();
  m.step = j.at("step").get<std::int64_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.num_classes = j.value("num_classes", 0);
  m.cubes = j.value("cubes", 0);
  m.perms = j.value("perms", 0);
  if (j.contains("cube")) m.cube = j.at("cube").get<Extent3>();
  return m;
}

}  // namespace

void save_checkpoint(const ModelCheckpoint& ckpt, const fs::path& path) {
  ordered_json header;
  header["magic"] = "RC01";
  header["meta"] = meta_to_json(ckpt.meta);
  ordered_json tensors = ordered_json::object();
  std::uint64_t offset = 0;
  for (const auto& t : ckpt.params) {
    if (shape_numel(t.shape) != static_cast<std::int64_t>(t.values.size())) {
      throw ValidationError("checkpoint tensor " + t.name + " has shape " + shape_string(t.shape) + " but " +
                            std::to_string(t.values.size()) + " values");
    }
    const std::uint64_t nbytes = t.values.size() * sizeof(float);
    tensors[t.name] = {{"shape", t.shape}, {"role", to_string(t.role)}, {"offset", offset}, {"nbytes", nbytes}};
    offset += nbytes;
  }
  header["tensors"] = std::move(tensors);

  fs::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    const std::string line = header.dump() + "\n";
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    for (const auto& t : ckpt.params) {
      out.write(reinterpret_cast<const char*>(t.values.data()),
                static_cast<std::streamsize>(t.values.size() * sizeof(float)));
    }
    if (!out) throw IoError("write failed for " + path.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

ModelCheckpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty checkpoint");
  const std::streamoff payload_start = in.tellg();
  in.seekg(0, std::ios::end);
  const std::uint64_t payload_size = static_cast<std::uint64_t>(in.tellg() - payload_start);
  in.seekg(payload_start);

  ModelCheckpoint ck;
  struct Slot {
    std::uint64_t offset, nbytes;
  };
  std::vector<Slot> slots;
  try {
    // Keep file order: nlohmann::json would sort the tensor table by name.
    const auto j = ordered_json::parse(line);
    if (j.value("magic", "") != "RC01") throw FormatError(path.string() + ": bad magic, expected RC01");
    ck.meta = meta_from_json(nlohmann::json::parse(j.at("meta").dump()));
    for (const auto& [name, t] : j.at("tensors").items()) {
      TensorRecord rec;
      rec.name = name;
      rec.role = role_from_string(t.at("role").get<std::string>());
      rec.shape = t.at("shape").get<std::vector<std::int64_t>>();
      slots.push_back({t.at("offset").get<std::uint64_t>(), t.at("nbytes").get<std::uint64_t>()});
      ck.params.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed RC01 header: " + e.what());
  } catch (const ArgumentError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }

  std::uint64_t expected = 0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto numel = static_cast<std::uint64_t>(shape_numel(ck.params[i].shape));
    if (slots[i].nbytes != numel * sizeof(float) || slots[i].offset != expected) {
      throw CorruptionError(path.string() + ": tensor " + ck.params[i].name + " table entry is inconsistent");
    }
    expected += slots[i].nbytes;
  }
  if (expected != payload_size) {
    throw CorruptionError(path.string() + ": payload has " + std::to_string(payload_size) + " bytes, tensor table needs " +
                          std::to_string(expected));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    auto& rec = ck.params[i];
    rec.values.resize(slots[i].nbytes / sizeof(float));
    in.read(reinterpret_cast<char*>(rec.values.data()), static_cast<std::streamsize>(slots[i].nbytes));
  }
  if (!in) throw CorruptionError(path.string() + ": short read");
  return ck;
}

TransferReport transfer(const ModelCheckpoint& ckpt, ParamStore& target, const std::set<Role>& roles) {
  std::vector<std::pair<Param*, const TensorRecord*>> plan;
  TransferReport report;
  for (std::size_t i = 0; i < target.size(); ++i) {
    Param& p = target[i];
    if (!roles.contains(p.role)) {
      report.fresh.push_back(p.name);
      continue;
    }
    const TensorRecord* rec = ckpt.find(p.name);
    if (!rec) throw TransferError("checkpoint has no parameter " + p.name + " (role " + to_string(p.role) + ")");
    if (rec->shape != p.value.shape()) {
      throw TransferError("parameter " + p.name + ": checkpoint shape " + shape_string(rec->shape) +
                          " does not match model shape " + shape_string(p.value.shape()));
    }
    if (rec->role != p.role) {
      throw TransferError("parameter " + p.name + ": checkpoint role " + to_string(rec->role) + " differs from model role " +
                          to_string(p.role));
    }
    plan.emplace_back(&p, rec);
  }
  for (auto [p, rec] : plan) {
    std::copy(rec->values.begin(), rec->values.end(), p->value.values().begin());
    report.initialized.push_back(p->name);
  }
  return report;
}

TransferReport load_checkpoint(const fs::path& path, ParamStore& target, const std::set<Role>& roles) {
  ModelCheckpoint ck;
  try {
    ck = load_checkpoint(path);
  } catch (const FormatError& e) {
    throw TransferError(std::string("cannot transfer: ") + e.what());
  } catch (const CorruptionError& e) {
    throw TransferError(std::string("cannot transfer: ") + e.what());
  }
  return transfer(ck, target, roles);
}

}  // namespace rubikssl
