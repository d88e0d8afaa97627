#include "contrast/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <toml.hpp>

#include "contrast/errors.hpp"

namespace contrast {

namespace fs = std::filesystem;

namespace {

std::string where(const std::string& section, const std::string& key) { return "[" + section + "] " + key; }

std::int64_t as_int(const toml::node& n, const std::string& at) {
  if (auto v = n.value_exact<std::int64_t>()) return *v;
  throw ConfigError(at + " must be an integer");
}

double as_double(const toml::node& n, const std::string& at) {
  if (auto v = n.value_exact<double>()) return *v;
  if (auto v = n.value_exact<std::int64_t>()) return static_cast<double>(*v);
  throw ConfigError(at + " must be a number");
}

bool as_bool(const toml::node& n, const std::string& at) {
  if (auto v = n.value_exact<bool>()) return *v;
  throw ConfigError(at + " must be a boolean");
}

std::string as_string(const toml::node& n, const std::string& at) {
  if (auto v = n.value_exact<std::string>()) return *v;
  throw ConfigError(at + " must be a string");
}

std::vector<std::int64_t> as_int_list(const toml::node& n, const std::string& at) {
  const auto* arr = n.as_array();
  if (!arr) throw ConfigError(at + " must be an array of integers");
  std::vector<std::int64_t> out;
  for (const auto& e : *arr) out.push_back(as_int(e, at));
  return out;
}

using Setter = std::function<void(const toml::node&, const std::string&)>;

void apply_table(const toml::table* t, const std::string& section, const std::map<std::string, Setter>& setters) {
  if (!t) return;
  for (auto&& [k, v] : *t) {
    const std::string key(k.str());
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown key " + where(section, key));
    it->second(v, where(section, key));
  }
}

const toml::table* section_of(const toml::table& root, const char* name) {
  const auto* node = root.get(name);
  if (!node) return nullptr;
  const auto* t = node->as_table();
  if (!t) throw ConfigError(std::string("[") + name + "] must be a table");
  return t;
}

void apply_override(toml::table& root, const std::string& spec) {
  const auto eq = spec.find('=');
  const auto dot = spec.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw ConfigError("override '" + spec + "' must look like section.key=value");
  const auto section = spec.substr(0, dot), key = spec.substr(dot + 1, eq - dot - 1), value = spec.substr(eq + 1);
  if (section != "model" && section != "train" && section != "data") throw ConfigError("unknown config section '" + section + "'");
  if (!root.contains(section)) root.insert_or_assign(section, toml::table{});
  auto* t = root.get(section)->as_table();
  if (!t) throw ConfigError(std::string("[") + section + "] must be a table");
  try {
    auto parsed = toml::parse("v = " + value);
    t->insert_or_assign(key, *parsed.get("v"));
  } catch (const toml::parse_error&) {
    t->insert_or_assign(key, value);  // bare words are strings
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

AppConfig from_table(toml::table root, const fs::path& base_dir, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) apply_override(root, o);
  for (auto&& [k, v] : root) {
    const std::string key(k.str());
    if (key != "model" && key != "train" && key != "data") throw ConfigError("unknown top-level key '" + key + "'");
  }

  AppConfig cfg;
  const auto* model = section_of(root, "model");
  std::string preset;
  if (model) {
    if (const auto* p = model->get("preset")) preset = as_string(*p, where("model", "preset"));
  }
  if (!preset.empty()) cfg.model = model_preset(preset);
  cfg.train = train_preset(preset.empty() ? cfg.model.name : preset);

  auto& m = cfg.model;
  apply_table(model, "model",
              {{"preset", [](const toml::node&, const std::string&) {}},
               {"name", [&](auto& n, auto& at) { m.name = as_string(n, at); }},
               {"scale", [&](auto& n, auto& at) { m.scale = as_int(n, at); }},
               {"embed_dim", [&](auto& n, auto& at) { m.embed_dim = as_int(n, at); }},
               {"num_groups", [&](auto& n, auto& at) { m.num_groups = as_int(n, at); }},
               {"blocks_per_group", [&](auto& n, auto& at) { m.blocks_per_group = as_int(n, at); }},
               {"window", [&](auto& n, auto& at) { m.window = as_int(n, at); }},
               {"overlap_ratio", [&](auto& n, auto& at) { m.overlap_ratio = as_double(n, at); }},
               {"num_heads", [&](auto& n, auto& at) { m.num_heads = as_int(n, at); }},
               {"mlp_ratio", [&](auto& n, auto& at) { m.mlp_ratio = as_double(n, at); }},
               {"ssm_state_dim", [&](auto& n, auto& at) { m.ssm_state_dim = as_int(n, at); }},
               {"ssm_ratio", [&](auto& n, auto& at) { m.ssm_ratio = as_double(n, at); }},
               {"dt_rank", [&](auto& n, auto& at) { m.dt_rank = as_int(n, at); }},
               {"use_cab", [&](auto& n, auto& at) { m.use_cab = as_bool(n, at); }},
               {"ffn_kind", [&](auto& n, auto& at) { m.ffn_kind = parse_ffn_kind(as_string(n, at)); }},
               {"ss2d_gated", [&](auto& n, auto& at) { m.ss2d_gated = as_bool(n, at); }},
               {"upsample_features", [&](auto& n, auto& at) { m.upsample_features = as_int(n, at); }}});

  auto& t = cfg.train;
  apply_table(section_of(root, "train"), "train",
              {{"total_iters", [&](auto& n, auto& at) { t.total_iters = as_int(n, at); }},
               {"batch", [&](auto& n, auto& at) { t.batch = as_int(n, at); }},
               {"patch", [&](auto& n, auto& at) { t.patch = as_int(n, at); }},
               {"base_lr", [&](auto& n, auto& at) { t.base_lr = as_double(n, at); }},
               {"beta1", [&](auto& n, auto& at) { t.beta1 = as_double(n, at); }},
               {"beta2", [&](auto& n, auto& at) { t.beta2 = as_double(n, at); }},
               {"eps", [&](auto& n, auto& at) { t.epsilon = as_double(n, at); }},
               {"milestones", [&](auto& n, auto& at) { t.milestones = as_int_list(n, at); }},
               {"lr_decay", [&](auto& n, auto& at) { t.lr_decay = as_double(n, at); }},
               {"seed",
                [&](auto& n, auto& at) {
                  const auto s = as_int(n, at);
                  if (s < 0) throw ConfigError(at + " must be >= 0");
                  t.seed = static_cast<std::uint64_t>(s);
                }},
               {"log_every", [&](auto& n, auto& at) { t.log_every = as_int(n, at); }},
               {"checkpoint_every", [&](auto& n, auto& at) { t.checkpoint_every = as_int(n, at); }},
               {"val_every", [&](auto& n, auto& at) { t.val_every = as_int(n, at); }},
               {"augment", [&](auto& n, auto& at) { t.augment = as_bool(n, at); }},
               {"prefetch", [&](auto& n, auto& at) { t.prefetch = as_int(n, at); }}});

  auto& d = cfg.data;
  apply_table(section_of(root, "data"), "data",
              {{"manifest", [&](auto& n, auto& at) { d.manifest = resolve(base_dir, as_string(n, at)); }},
               {"root", [&](auto& n, auto& at) { d.root = resolve(base_dir, as_string(n, at)); }},
               {"val_image", [&](auto& n, auto& at) { d.val_hr = resolve(base_dir, as_string(n, at)); }},
               {"write_lr_cache", [&](auto& n, auto& at) { d.write_lr_cache = as_bool(n, at); }},
               {"quantize_first", [&](auto& n, auto& at) { d.quantize_first = as_bool(n, at); }}});

  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

}  // namespace

AppConfig parse_config(std::string_view text, const fs::path& base_dir, const std::vector<std::string>& overrides) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError("config parse error: " + os.str());
  }
  return from_table(std::move(root), base_dir, overrides);
}

AppConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return parse_config(ss.str(), path.parent_path(), overrides);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

AppConfig preset_config(std::string_view preset, const std::vector<std::string>& overrides) {
  toml::table root;
  root.insert_or_assign("model", toml::table{{"preset", std::string(preset)}});
  return from_table(std::move(root), fs::current_path(), overrides);
}

void apply_environment(AppConfig& cfg) {
  const char* s = std::getenv("CONTRAST_SEED");
  if (!s || !*s) return;
  char* end = nullptr;
  const auto v = std::strtoull(s, &end, 10);
  if (*end != '\0') throw ConfigError(std::string("CONTRAST_SEED must be a non-negative integer, got '") + s + "'");
  cfg.train.seed = v;
}

DatasetManifest resolve_manifest(const DataConfig& data, std::int64_t scale) {
  if (!data.manifest.empty()) {
    auto m = load_manifest(data.manifest);
    if (m.scale != scale)
      throw ConfigError("manifest scale " + std::to_string(m.scale) + " does not match model scale " + std::to_string(scale));
    return m;
  }
  if (!data.root.empty()) return manifest_from_directory(data.root, scale);
  throw ConfigError("[data] needs either manifest or root");
}

}  // namespace contrast
