#include "metaadamw/harness/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "metaadamw/harness/tasks.hpp"

namespace metaadamw::harness {

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::adamw ? "adamw" : "meta_adamw";
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  if (text == "nan") return std::nan("");
  if (text == "inf") return INFINITY;
  if (text == "-inf") return -INFINITY;
  double x = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), x);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw std::invalid_argument("not a number: '" + std::string(text) + "'");
  }
  return x;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_uint(std::string_view text) {
  std::uint64_t x = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), x);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw std::invalid_argument("not a non-negative integer: '" + std::string(text) + "'");
  }
  return x;
}

bool parse_bool(std::string_view text) {
  if (text == "true" || text == "on" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "off" || text == "0" || text == "no") return false;
  throw std::invalid_argument("not a boolean: '" + std::string(text) + "'");
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

std::array<double, 3> parse_triple(std::string_view text) {
  std::array<double, 3> out{};
  std::size_t k = 0;
  while (true) {
    const auto comma = text.find(',');
    if (k == 3) throw std::invalid_argument("priorities need exactly three values");
    out[k++] = parse_double(trim(text.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (k != 3) throw std::invalid_argument("priorities need exactly three values");
  return out;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define MADW_DOUBLE(name, member)                                                   \
  Field {                                                                           \
    name, [](RunConfig& c, std::string_view v) { c.member = parse_double(v); },     \
        [](const RunConfig& c) { return format_double(c.member); }                  \
  }
#define MADW_SIZE(name, member)                                                     \
  Field {                                                                           \
    name, [](RunConfig& c, std::string_view v) { c.member = parse_uint(v); },       \
        [](const RunConfig& c) { return std::to_string(c.member); }                 \
  }
#define MADW_BOOL(name, member)                                                     \
  Field {                                                                           \
    name, [](RunConfig& c, std::string_view v) { c.member = parse_bool(v); },       \
        [](const RunConfig& c) { return bool_text(c.member); }                      \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> all{
      {"task", [](RunConfig& c, std::string_view v) { c.task = std::string(v); },
       [](const RunConfig& c) { return c.task; }},
      {"preset", [](RunConfig& c, std::string_view v) { c.preset = std::string(v); },
       [](const RunConfig& c) { return c.preset; }},
      {"optimizer",
       [](RunConfig& c, std::string_view v) {
         if (v == "adamw") c.optimizer = OptimizerKind::adamw;
         else if (v == "meta_adamw") c.optimizer = OptimizerKind::meta_adamw;
         else throw std::invalid_argument("unknown optimizer '" + std::string(v) + "'");
       },
       [](const RunConfig& c) { return std::string(to_string(c.optimizer)); }},
      MADW_DOUBLE("lr", opt.lr),
      MADW_DOUBLE("weight_decay", opt.weight_decay),
      MADW_DOUBLE("beta1", opt.beta1),
      MADW_DOUBLE("beta2", opt.beta2),
      MADW_DOUBLE("eps", opt.eps),
      {"objective", [](RunConfig& c, std::string_view v) { c.meta.objective = parse_objective(v); },
       [](const RunConfig& c) { return std::string(to_string(c.meta.objective)); }},
      MADW_SIZE("k_meta", meta.k_meta),
      MADW_SIZE("warmup_epochs", meta.warmup_epochs),
      MADW_DOUBLE("meta_lr", meta.meta_lr),
      MADW_BOOL("first_order", meta.first_order),
      MADW_DOUBLE("s_clamp", meta.s_clamp),
      MADW_BOOL("meta_updates", meta_updates),
      {"grouping",
       [](RunConfig& c, std::string_view v) {
         if (v == "fine_grained") c.grouping = GroupingStrategy::fine_grained;
         else if (v == "native") c.grouping = GroupingStrategy::native;
         else throw std::invalid_argument("unknown grouping '" + std::string(v) + "'");
       },
       [](const RunConfig& c) {
         return std::string(c.grouping == GroupingStrategy::native ? "native" : "fine_grained");
       }},
      {"features",
       [](RunConfig& c, std::string_view v) { c.features.version = parse_feature_version(v); },
       [](const RunConfig& c) { return std::string(to_string(c.features.version)); }},
      MADW_BOOL("use_v_norms", features.use_v_norms),
      MADW_BOOL("include_time", features.include_time),
      MADW_BOOL("normalized_features", features.normalized),
      MADW_SIZE("embedding_width", features.embedding_width),
      MADW_SIZE("feature_dim", feature_dim),
      MADW_SIZE("attn_layers", modulation.n_layers),
      MADW_SIZE("attn_heads", modulation.n_heads),
      MADW_SIZE("attn_ff", modulation.d_ff),
      MADW_DOUBLE("alpha_range", modulation.range_alpha),
      MADW_DOUBLE("beta_range", modulation.range_beta),
      MADW_BOOL("gating", modulation.gating),
      MADW_DOUBLE("gate_l1", modulation.gate_l1),
      {"priorities", [](RunConfig& c, std::string_view v) { c.priorities = parse_triple(v); },
       [](const RunConfig& c) {
         return format_double(c.priorities[0]) + "," + format_double(c.priorities[1]) + "," +
                format_double(c.priorities[2]);
       }},
      MADW_SIZE("seed", seed),
      MADW_SIZE("max_epochs", max_epochs),
      MADW_SIZE("patience", patience),
      MADW_SIZE("batch_size", batch_size),
      MADW_SIZE("meta_batch_size", meta_batch_size),
      MADW_SIZE("val_batch_size", val_batch_size),
      {"clock",
       [](RunConfig& c, std::string_view v) {
         if (v == "wall") c.clock = Clock::wall;
         else if (v == "off") c.clock = Clock::off;
         else throw std::invalid_argument("clock must be wall or off");
       },
       [](const RunConfig& c) { return std::string(c.clock == Clock::wall ? "wall" : "off"); }},
  };
  return all;
}

#undef MADW_DOUBLE
#undef MADW_SIZE
#undef MADW_BOOL

struct Preset {
  std::string name;
  std::string task;
  std::size_t k_meta, layers, d_ff, heads;
  FeatureVersion features;
  std::size_t feature_dim;
  bool gating;
  std::array<double, 3> priorities;
};

const std::vector<Preset>& presets() {
  static const std::vector<Preset> all{
      {"etth1", "sine", 217, 8, 16, 6, FeatureVersion::basic, 6, true, {1, 1, 1}},
      {"wikitext2", "charlm", 123, 8, 16, 6, FeatureVersion::basic, 6, false, {1, 1, 1}},
      {"multi30k", "charlm", 454, 128, 64, 6, FeatureVersion::basic, 6, false, {2, 5, 1}},
      {"cifar10", "spirals", 190, 64, 64, 6, FeatureVersion::basic, 6, false, {5, 2, 1}},
      {"imdb", "spirals", 39, 64, 64, 11, FeatureVersion::basic_plus, 11, true, {1, 3, 5}},
  };
  return all;
}

}  // namespace

void RunConfig::validate() const {
  bool known = false;
  for (const auto& t : task_ids()) known = known || t == task;
  if (!known) throw std::invalid_argument("unknown task '" + task + "'");
  opt.validate();
  meta.validate();
  for (double p : priorities) {
    if (!(p > 0.0)) throw std::invalid_argument("priorities must be positive");
  }
  if (max_epochs == 0) throw std::invalid_argument("max_epochs must be >= 1");
  if (patience == 0) throw std::invalid_argument("patience must be >= 1");
  if (batch_size == 0 || meta_batch_size == 0 || val_batch_size == 0) {
    throw std::invalid_argument("batch sizes must be >= 1");
  }
  const std::size_t d = metaadamw::feature_dim(features);
  if (feature_dim != 0 && feature_dim != d) {
    throw std::invalid_argument("feature_dim " + std::to_string(feature_dim) + " does not match the " +
                                std::string(to_string(features.version)) + " layout (" +
                                std::to_string(d) + " columns)");
  }
  ModulationConfig m = modulation;
  m.feature_dim = d;
  m.validate();
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

void set_key(RunConfig& cfg, std::string_view key, std::string_view value) {
  if (key == "preset") {
    apply_preset(cfg, value);
    return;
  }
  for (const auto& f : fields()) {
    if (f.key == key) {
      try {
        f.set(cfg, value);
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(std::string(key) + ": " + e.what());
      }
      return;
    }
  }
  throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
}

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected key = value");
    }
    entries.emplace_back(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
  }
  for (const auto& [k, v] : entries) {
    if (k == "preset") set_key(base, k, v);
  }
  for (const auto& [k, v] : entries) {
    if (k != "preset") set_key(base, k, v);
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) {
    if (f.key == "preset" && cfg.preset.empty()) continue;
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

bool operator==(const RunConfig& a, const RunConfig& b) { return to_text(a) == to_text(b); }

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& p : presets()) n.push_back(p.name);
    return n;
  }();
  return names;
}

void apply_preset(RunConfig& cfg, std::string_view name) {
  for (const auto& p : presets()) {
    if (p.name != name) continue;
    cfg.preset = p.name;
    cfg.task = p.task;
    cfg.optimizer = OptimizerKind::meta_adamw;
    cfg.meta.k_meta = p.k_meta;
    cfg.modulation.n_layers = p.layers;
    cfg.modulation.d_ff = p.d_ff;
    cfg.modulation.n_heads = p.heads;
    cfg.modulation.gating = p.gating;
    cfg.features.version = p.features;
    cfg.feature_dim = p.feature_dim;
    cfg.priorities = p.priorities;
    return;
  }
  throw std::invalid_argument("unknown preset '" + std::string(name) + "'");
}

RunConfig config_for(std::string_view task_or_preset) {
  RunConfig cfg;
  for (const auto& p : preset_names()) {
    if (p == task_or_preset) {
      apply_preset(cfg, p);
      return cfg;
    }
  }
  cfg.task = std::string(task_or_preset);
  cfg.validate();
  return cfg;
}

}  // namespace metaadamw::harness
