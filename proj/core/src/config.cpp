#include "rubikssl/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "rubikssl/errors.hpp"
#include "rubikssl/hash.hpp"

namespace rubikssl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& k) {
  if (k.empty() || k.front() == '.' || k.back() == '.') return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.')) return false;
  return k.find("..") == std::string::npos;
}

}  // namespace

ConfigMap parse_config(const std::string& text, const std::string& origin) {
  ConfigMap m;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!valid_key(key)) throw ConfigError(where + ": invalid key '" + key + "'");
    if (!m.emplace(key, value).second) throw ConfigError(where + ": duplicate key '" + key + "'");
  }
  return m;
}

ConfigMap load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

ConfigMap parse_overrides(const std::vector<std::string>& items) {
  ConfigMap m;
  for (const auto& it : items) {
    const auto eq = it.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + it + "' is not key=value");
    const std::string key = trim(it.substr(0, eq));
    if (!valid_key(key)) throw ConfigError("override has invalid key '" + key + "'");
    m[key] = trim(it.substr(eq + 1));
  }
  return m;
}

ConfigMap merge(std::initializer_list<const ConfigMap*> layers) {
  ConfigMap out;
  for (const auto* l : layers)
    if (l)
      for (const auto& [k, v] : *l) out[k] = v;
  return out;
}

std::string render_config(const ConfigMap& m) {
  std::string s;
  for (const auto& [k, v] : m) s += k + " = " + v + "\n";
  return s;
}

std::string config_hash(const ConfigMap& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [k, v] : m) h = fnv1a64(k + "=" + v + "\n", h);
  return hex64(h);
}

const char* to_string(Phase p) {
  switch (p) {
    case Phase::pretrain: return "pretrain";
    case Phase::finetune_cls: return "finetune_cls";
    case Phase::finetune_seg: return "finetune_seg";
  }
  return "?";
}

Phase phase_from_string(const std::string& s) {
  if (s == "pretrain") return Phase::pretrain;
  if (s == "finetune_cls") return Phase::finetune_cls;
  if (s == "finetune_seg") return Phase::finetune_seg;
  throw ConfigError("phase: unknown value '" + s + "' (pretrain, finetune_cls, finetune_seg)");
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": cannot parse '" + v + "' as a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::array<std::int64_t, 3> parse_triple(const std::string& key, const std::string& v) {
  std::array<std::int64_t, 3> out{};
  std::stringstream ss(v);
  std::string part;
  int i = 0;
  while (std::getline(ss, part, ',')) {
    if (i == 3) throw ConfigError(key + ": expected three comma-separated integers, got '" + v + "'");
    out[static_cast<std::size_t>(i++)] = parse_number<std::int64_t>(key, trim(part));
  }
  if (i == 1) out[1] = out[2] = out[0];  // "64" means 64,64,64
  else if (i != 3) throw ConfigError(key + ": expected three comma-separated integers, got '" + v + "'");
  return out;
}

std::string triple(const std::array<std::int64_t, 3>& t) {
  return std::to_string(t[0]) + "," + std::to_string(t[1]) + "," + std::to_string(t[2]);
}

// Shortest text that parses back to the same double.
std::string num(double d) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, r.ptr);
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key + ": " + what);
}

}  // namespace

TrainConfig default_config(Phase phase) {
  TrainConfig c;
  c.phase = phase;
  if (phase != Phase::pretrain) c.epochs = 30;
  return c;
}

TrainConfig config_from_map(const ConfigMap& m) {
  const auto ph = m.find("phase");
  TrainConfig c = default_config(ph == m.end() ? Phase::pretrain : phase_from_string(ph->second));
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"phase", [&](auto&, auto&) {}},
      {"seed", [&](auto& k, auto& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
      {"deterministic", [&](auto& k, auto& v) { c.deterministic = parse_bool(k, v); }},
      {"model.backbone", [&](auto&, auto& v) { c.backbone = v; }},
      {"model.in_channels", [&](auto& k, auto& v) { c.in_channels = parse_number<std::int64_t>(k, v); }},
      {"grid.shape", [&](auto& k, auto& v) { c.grid.grid = parse_triple(k, v); }},
      {"grid.cube", [&](auto& k, auto& v) { c.grid.cube = parse_triple(k, v); }},
      {"grid.gap", [&](auto& k, auto& v) { c.grid.gap = parse_number<std::int64_t>(k, v); }},
      {"grid.jitter", [&](auto& k, auto& v) { c.grid.jitter = parse_number<std::int64_t>(k, v); }},
      {"grid.strict_gap", [&](auto& k, auto& v) { c.grid.strict_gap = parse_bool(k, v); }},
      {"proxy.perms", [&](auto& k, auto& v) { c.perms = parse_number<int>(k, v); }},
      {"proxy.rot_prob", [&](auto& k, auto& v) { c.rot_prob = parse_number<double>(k, v); }},
      {"loss.alpha", [&](auto& k, auto& v) { c.loss.alpha = parse_number<double>(k, v); }},
      {"loss.beta", [&](auto& k, auto& v) { c.loss.beta = parse_number<double>(k, v); }},
      {"task.num_classes", [&](auto& k, auto& v) { c.num_classes = parse_number<int>(k, v); }},
      {"task.input", [&](auto& k, auto& v) { c.input = parse_triple(k, v); }},
      {"init", [&](auto&, auto& v) { c.init = v; }},
      {"freeze_encoder", [&](auto& k, auto& v) { c.freeze_encoder = parse_bool(k, v); }},
      {"optim.kind", [&](auto& k, auto& v) {
         try {
           c.optim.kind = optimizer_from_string(v);
         } catch (const ConfigError& e) {
           throw ConfigError(k + ": " + e.what());
         }
       }},
      {"optim.lr", [&](auto& k, auto& v) { c.optim.learning_rate = parse_number<double>(k, v); }},
      {"optim.momentum", [&](auto& k, auto& v) { c.optim.momentum = parse_number<double>(k, v); }},
      {"optim.weight_decay", [&](auto& k, auto& v) { c.optim.weight_decay = parse_number<double>(k, v); }},
      {"train.batch_size", [&](auto& k, auto& v) { c.batch_size = parse_number<int>(k, v); }},
      {"train.epochs", [&](auto& k, auto& v) { c.epochs = parse_number<int>(k, v); }},
      {"train.eval_every", [&](auto& k, auto& v) { c.eval_every = parse_number<int>(k, v); }},
      {"train.workers", [&](auto& k, auto& v) { c.workers = parse_number<int>(k, v); }},
      {"data.split_ratio", [&](auto& k, auto& v) { c.split_ratio = parse_number<double>(k, v); }},
      {"data.split_seed", [&](auto& k, auto& v) { c.split_seed = parse_number<std::uint64_t>(k, v); }},
  };
  for (const auto& [k, v] : m) {
    const auto it = setters.find(k);
    if (it == setters.end()) throw ConfigError(k + ": unknown configuration key");
    it->second(k, v);
  }
  c.validate();
  return c;
}

ConfigMap config_to_map(const TrainConfig& c) {
  return {
      {"phase", to_string(c.phase)},
      {"seed", std::to_string(c.seed)},
      {"deterministic", c.deterministic ? "true" : "false"},
      {"model.backbone", c.backbone},
      {"model.in_channels", std::to_string(c.in_channels)},
      {"grid.shape", triple(c.grid.grid)},
      {"grid.cube", triple(c.grid.cube)},
      {"grid.gap", std::to_string(c.grid.gap)},
      {"grid.jitter", std::to_string(c.grid.jitter)},
      {"grid.strict_gap", c.grid.strict_gap ? "true" : "false"},
      {"proxy.perms", std::to_string(c.perms)},
      {"proxy.rot_prob", num(c.rot_prob)},
      {"loss.alpha", num(c.loss.alpha)},
      {"loss.beta", num(c.loss.beta)},
      {"task.num_classes", std::to_string(c.num_classes)},
      {"task.input", triple(c.input)},
      {"init", c.init},
      {"freeze_encoder", c.freeze_encoder ? "true" : "false"},
      {"optim.kind", to_string(c.optim.kind)},
      {"optim.lr", num(c.optim.learning_rate)},
      {"optim.momentum", num(c.optim.momentum)},
      {"optim.weight_decay", num(c.optim.weight_decay)},
      {"train.batch_size", std::to_string(c.batch_size)},
      {"train.epochs", std::to_string(c.epochs)},
      {"train.eval_every", std::to_string(c.eval_every)},
      {"train.workers", std::to_string(c.workers)},
      {"data.split_ratio", num(c.split_ratio)},
      {"data.split_seed", std::to_string(c.split_seed)},
  };
}

void TrainConfig::validate() const {
  try {
    backbone_config();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("model.backbone: ") + e.what());
  }
  require(in_channels >= 1, "model.in_channels", "must be >= 1");
  for (int a = 0; a < 3; ++a) {
    require(grid.grid[static_cast<std::size_t>(a)] >= 1, "grid.shape", "entries must be >= 1");
    require(grid.cube[static_cast<std::size_t>(a)] >= 1, "grid.cube", "entries must be >= 1");
    require(input[static_cast<std::size_t>(a)] >= 0, "task.input", "entries must be >= 0");
  }
  require(grid.gap >= 0, "grid.gap", "must be >= 0");
  require(grid.jitter >= 0, "grid.jitter", "must be >= 0");
  if (phase == Phase::pretrain) {
    require(cubes() >= 2, "grid.shape", "the grid needs at least 2 cubes");
    require(perms >= 2, "proxy.perms", "must be >= 2");
    try {
      backbone_config().output_extent(grid.cube);
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("grid.cube: ") + e.what());
    }
  }
  require(rot_prob >= 0.0 && rot_prob <= 1.0, "proxy.rot_prob", "must be in [0, 1]");
  try {
    loss.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("loss: ") + e.what());
  }
  require(num_classes >= 2, "task.num_classes", "must be >= 2");
  if (init != "scratch") require(std::filesystem::exists(init), "init", "checkpoint '" + init + "' does not exist");
  require(optim.learning_rate > 0.0, "optim.lr", "must be positive");
  require(optim.momentum >= 0.0 && optim.momentum < 1.0, "optim.momentum", "must be in [0, 1)");
  require(optim.weight_decay >= 0.0, "optim.weight_decay", "must be >= 0");
  require(batch_size >= 1, "train.batch_size", "must be >= 1");
  require(epochs >= 0, "train.epochs", "must be >= 0");
  require(eval_every >= 1, "train.eval_every", "must be >= 1");
  require(workers >= 0, "train.workers", "must be >= 0");
  require(split_ratio > 0.0 && split_ratio < 1.0, "data.split_ratio", "must be in (0, 1)");
}

}  // namespace rubikssl
