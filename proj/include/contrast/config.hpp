#pragma once

// TOML run configuration: [model], [train] and [data] tables. A `preset`
// key in [model] seeds every default; explicit keys override it, and
// `section.key=value` overrides (CLI --set) are applied last.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "contrast/data.hpp"
#include "contrast/model.hpp"
#include "contrast/trainer.hpp"

namespace contrast {

struct DataConfig {
  std::filesystem::path manifest;  // JSON manifest, or
  std::filesystem::path root;      // directory holding HR/ (and LRbicX*/)
  std::optional<std::filesystem::path> val_hr;
  bool write_lr_cache = true;
  bool quantize_first = false;  // round SR to 8 bits before metrics
};

struct AppConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
};

AppConfig parse_config(std::string_view text, const std::filesystem::path& base_dir,
                       const std::vector<std::string>& overrides = {});
/// ConfigError (naming the path) when the file cannot be read or parsed.
AppConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
/// Config for a named preset with an empty [data] table.
AppConfig preset_config(std::string_view preset, const std::vector<std::string>& overrides = {});

/// CONTRAST_SEED, when set, replaces train.seed.
void apply_environment(AppConfig& cfg);

DatasetManifest resolve_manifest(const DataConfig& data, std::int64_t scale);

}  // namespace contrast
