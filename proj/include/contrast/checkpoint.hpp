#pragma once

// Binary layout: "CTRSTCKPT", u32 version, u64 header size, JSON header,
// then little-endian float64 payloads at the offsets the header lists.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "contrast/model.hpp"
#include "contrast/optim.hpp"

namespace contrast {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  ModelConfig config;
  std::vector<NamedArray> params;
  std::optional<AdamState> adam;
  std::int64_t iteration = 0;
  std::string rng_state;  // textual std::mt19937_64 state; empty if unused
};

Checkpoint snapshot(const Model& model, std::int64_t iteration = 0, const AdamState* adam = nullptr,
                    std::string rng_state = {});

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// FormatError on a corrupt, truncated or wrong-version file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies parameters into `model`. ConfigError if the stored config or any
/// parameter name/shape disagrees with the model.
void restore(Model& model, const Checkpoint& ckpt);
/// Builds a model from the stored config and restores it.
Model model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace contrast
