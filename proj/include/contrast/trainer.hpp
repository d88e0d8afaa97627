#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "contrast/checkpoint.hpp"
#include "contrast/data.hpp"
#include "contrast/model.hpp"
#include "contrast/optim.hpp"

namespace contrast {

struct TrainConfig {
  std::int64_t total_iters = 500000;
  std::int64_t batch = 32;
  std::int64_t patch = 64;  // LR side
  double base_lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  std::vector<std::int64_t> milestones{250000, 400000, 450000, 475000};
  double lr_decay = 0.5;
  std::uint64_t seed = 0;
  std::int64_t log_every = 100;
  std::int64_t checkpoint_every = 5000;  // 0 disables periodic checkpoints
  std::int64_t val_every = 5000;         // 0 disables validation
  bool augment = true;
  std::int64_t prefetch = 2;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Defaults for a model preset: base_lr 1e-4 for contrast, 2e-4 otherwise.
TrainConfig train_preset(std::string_view model_preset);

/// base_lr * decay^(number of milestones <= iter).
double lr_at(std::int64_t iter, const TrainConfig& cfg);

/// Mean absolute error; the subgradient at exact ties is 0.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

struct TrainRecord {
  std::int64_t iter = 0;  // 0-based index of the step just taken
  double lr = 0.0;
  double loss = 0.0;
  std::optional<double> val_psnr;
};

std::string record_json(const TrainRecord& r);

// Thrown when the loss or a gradient becomes non-finite.
class TrainingAborted : public Error {
 public:
  using Error::Error;
};

class Trainer {
 public:
  Trainer(const ModelConfig& model_cfg, const TrainConfig& cfg, std::shared_ptr<const std::vector<LoadedImage>> data);
  /// Continues from a checkpoint holding optimizer and sampler state.
  Trainer(const Checkpoint& ckpt, const TrainConfig& cfg, std::shared_ptr<const std::vector<LoadedImage>> data);

  TrainRecord step();
  std::int64_t iteration() const { return iter_; }
  bool finished() const { return iter_ >= cfg_.total_iters; }

  const Model& model() const { return model_; }
  const TrainConfig& config() const { return cfg_; }
  Checkpoint checkpoint() const;

  /// PSNR (crop = scale) of the current model on one held-out pair.
  double validate(const LoadedImage& val) const;

  struct RunOptions {
    std::optional<std::filesystem::path> out_dir;  // log.jsonl and checkpoints
    std::optional<LoadedImage> val_image;
    std::int64_t max_steps = -1;  // stop early after this many steps
    std::function<void(const TrainRecord&)> on_record;
  };
  /// Steps until total_iters (or max_steps). Returns every step's record.
  std::vector<TrainRecord> run(const RunOptions& opts);

 private:
  void start_stream(Rng rng);

  ModelConfig model_cfg_;
  TrainConfig cfg_;
  std::shared_ptr<const std::vector<LoadedImage>> data_;
  Model model_;
  AdamState adam_;
  std::int64_t iter_ = 0;
  std::string rng_state_;
  std::unique_ptr<BatchIterator> stream_;
};

}  // namespace contrast
