#include "contrast/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "contrast/metrics.hpp"
#include "contrast/ops.hpp"

namespace contrast {

namespace {
// Keeps the sampler stream independent of the parameter-init stream.
constexpr std::uint64_t kDataSeedSalt = 0x9e3779b97f4a7c15ULL;
}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train: " + m); };
  if (total_iters <= 0) fail("total_iters must be positive");
  if (batch <= 0 || patch <= 0) fail("batch and patch must be positive");
  if (!(base_lr >= 0.0)) fail("base_lr must be >= 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) fail("betas must be in [0, 1)");
  if (!(epsilon > 0.0)) fail("eps must be positive");
  if (!(lr_decay > 0.0)) fail("lr_decay must be positive");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (milestones[i] < 0 || milestones[i] >= total_iters) fail("milestones must lie in [0, total_iters)");
    if (i > 0 && milestones[i] <= milestones[i - 1]) fail("milestones must be strictly increasing");
  }
  if (log_every <= 0) fail("log_every must be positive");
  if (checkpoint_every < 0 || val_every < 0 || prefetch < 0) fail("checkpoint_every, val_every and prefetch must be >= 0");
}

TrainConfig train_preset(std::string_view model_preset) {
  TrainConfig t;
  t.base_lr = model_preset == "contrast" ? 1e-4 : 2e-4;
  return t;
}

double lr_at(std::int64_t iter, const TrainConfig& cfg) {
  const auto passed = std::count_if(cfg.milestones.begin(), cfg.milestones.end(), [iter](std::int64_t m) { return iter >= m; });
  return cfg.base_lr * std::pow(cfg.lr_decay, static_cast<double>(passed));
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw ShapeError("l1_loss: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  return mean(abs(sub(pred, target)));
}

std::string record_json(const TrainRecord& r) {
  nlohmann::json j{{"iter", r.iter}, {"lr", r.lr}, {"loss", r.loss}};
  if (r.val_psnr) {
    if (std::isinf(*r.val_psnr))
      j["val_psnr"] = "inf";
    else
      j["val_psnr"] = *r.val_psnr;
  }
  return j.dump();
}

Trainer::Trainer(const ModelConfig& model_cfg, const TrainConfig& cfg, std::shared_ptr<const std::vector<LoadedImage>> data)
    : model_cfg_(model_cfg), cfg_(cfg), data_(std::move(data)), model_(model_cfg, cfg.seed) {
  cfg_.validate();
  adam_ = init_adam(model_.params());
  start_stream(Rng(cfg_.seed ^ kDataSeedSalt));
}

Trainer::Trainer(const Checkpoint& ckpt, const TrainConfig& cfg, std::shared_ptr<const std::vector<LoadedImage>> data)
    : model_cfg_(ckpt.config), cfg_(cfg), data_(std::move(data)), model_(model_from_checkpoint(ckpt)) {
  cfg_.validate();
  if (!ckpt.adam) throw ConfigError("checkpoint has no optimizer state; cannot resume training");
  if (ckpt.rng_state.empty()) throw ConfigError("checkpoint has no sampler state; cannot resume training");
  adam_ = *ckpt.adam;
  iter_ = ckpt.iteration;
  start_stream(rng_from_string(ckpt.rng_state));
}

void Trainer::start_stream(Rng rng) {
  rng_state_ = rng_to_string(rng);
  BatchSpec spec{cfg_.batch, cfg_.patch, model_cfg_.scale, cfg_.augment, cfg_.prefetch};
  stream_ = std::make_unique<BatchIterator>(data_, spec, std::move(rng));
}

TrainRecord Trainer::step() {
  autograd::clear_graph();
  auto batch = stream_->next();
  for (const auto& [name, p] : model_.params().entries()) {
    Tensor t = p;
    t.mutable_grad();
    t.zero_grad();
  }
  const double lr = lr_at(iter_, cfg_);
  auto loss = l1_loss(model_.forward(batch.lr), batch.hr);
  const double value = loss.item();
  if (!std::isfinite(value)) {
    autograd::clear_graph();
    throw TrainingAborted("non-finite loss " + std::to_string(value) + " at iter " + std::to_string(iter_) + " (lr " +
                          std::to_string(lr) + ")");
  }
  autograd::backward(loss);
  autograd::clear_graph();
  for (const auto& [name, p] : model_.params().entries()) {
    for (double g : p.grad())
      if (!std::isfinite(g))
        throw TrainingAborted("non-finite gradient in '" + name + "' at iter " + std::to_string(iter_) + " (loss " +
                              std::to_string(value) + ")");
  }
  adam_step(model_.params(), adam_, lr, {cfg_.beta1, cfg_.beta2, cfg_.epsilon});
  rng_state_ = std::move(batch.rng_after);
  TrainRecord rec{iter_, lr, value, std::nullopt};
  ++iter_;
  return rec;
}

Checkpoint Trainer::checkpoint() const { return snapshot(model_, iter_, &adam_, rng_state_); }

double Trainer::validate(const LoadedImage& val) const {
  return psnr_y(upscale_image(model_, val.lr), val.hr, model_cfg_.scale);
}

std::vector<TrainRecord> Trainer::run(const RunOptions& opts) {
  std::ofstream log;
  if (opts.out_dir) {
    std::filesystem::create_directories(*opts.out_dir);
    log.open(*opts.out_dir / "log.jsonl", std::ios::app);
    if (!log) throw Error("cannot open training log in " + opts.out_dir->string());
  }
  auto save = [&](const std::string& name) {
    if (opts.out_dir) save_checkpoint(*opts.out_dir / name, checkpoint());
  };
  std::vector<TrainRecord> records;
  std::int64_t taken = 0;
  while (!finished() && (opts.max_steps < 0 || taken < opts.max_steps)) {
    auto rec = step();
    ++taken;
    const bool last = finished() || taken == opts.max_steps;
    const auto done = rec.iter + 1;
    if (opts.val_image && ((cfg_.val_every > 0 && done % cfg_.val_every == 0) || last)) rec.val_psnr = validate(*opts.val_image);
    if (log.is_open() && (rec.iter % cfg_.log_every == 0 || rec.val_psnr || last)) log << record_json(rec) << '\n' << std::flush;
    if (opts.on_record) opts.on_record(rec);
    if (cfg_.checkpoint_every > 0 && done % cfg_.checkpoint_every == 0) {
      save("iter_" + std::to_string(done) + ".ckpt");
      save("latest.ckpt");
    }
    records.push_back(rec);
  }
  save("latest.ckpt");
  return records;
}

}  // namespace contrast
