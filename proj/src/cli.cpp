#include "contrast/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "contrast/checkpoint.hpp"
#include "contrast/config.hpp"
#include "contrast/metrics.hpp"
#include "contrast/trainer.hpp"

namespace contrast::cli {

namespace fs = std::filesystem;

namespace {

struct TrainArgs {
  std::string config;
  std::string resume;
  std::string out;
  std::vector<std::string> sets;
  std::int64_t steps = -1;
};

struct EvalArgs {
  std::string checkpoint;
  std::string baseline;
  std::string manifest;
  std::string report;
  std::int64_t crop = -1;
  bool quantize_first = false;
};

struct UpscaleArgs {
  std::string checkpoint;
  std::string input;
  std::string output;
};

struct InfoArgs {
  std::string config;
  std::string preset;
  std::vector<std::string> sets;
  std::int64_t height = 256;
  std::int64_t width = 256;
};

std::string fmt_psnr(double v) {
  if (std::isinf(v)) return "inf";
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

LoadedImage validation_pair(const fs::path& hr_path, std::int64_t scale) {
  LoadedImage v;
  v.name = hr_path.stem().string();
  v.hr = modcrop(load_png(hr_path), scale);
  v.lr = degrade(v.hr, scale);
  return v;
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  auto cfg = load_config(a.config, a.sets);
  apply_environment(cfg);
  const auto manifest = resolve_manifest(cfg.data, cfg.model.scale);
  auto data = std::make_shared<const std::vector<LoadedImage>>(load_dataset(manifest, cfg.data.write_lr_cache));
  std::optional<Trainer> trainer;
  if (!a.resume.empty()) {
    auto ckpt = load_checkpoint(a.resume);
    if (!(ckpt.config == cfg.model)) throw ConfigError("checkpoint " + a.resume + " was trained with a different [model] config");
    trainer.emplace(ckpt, cfg.train, data);
    err << "resuming at iter " << trainer->iteration() << "\n";
  } else {
    trainer.emplace(cfg.model, cfg.train, data);
  }
  Trainer::RunOptions opts;
  opts.out_dir = fs::path(a.out);
  opts.max_steps = a.steps;
  if (cfg.data.val_hr) opts.val_image = validation_pair(*cfg.data.val_hr, cfg.model.scale);
  opts.on_record = [&](const TrainRecord& r) {
    if (r.iter % cfg.train.log_every == 0 || r.val_psnr) err << record_json(r) << "\n";
  };
  fs::create_directories(a.out);
  {
    std::ofstream cfg_out(fs::path(a.out) / "model.json");
    cfg_out << model_config_to_json(cfg.model) << "\n";
  }
  const auto records = trainer->run(opts);
  if (!records.empty()) {
    const auto& last = records.back();
    out << "trained " << records.size() << " steps, iter " << trainer->iteration() << ", final loss " << std::setprecision(6)
        << last.loss;
    if (last.val_psnr) out << ", val psnr " << fmt_psnr(*last.val_psnr) << " dB";
    out << "\ncheckpoint " << (fs::path(a.out) / "latest.ckpt").string() << "\n";
  }
  return kExitOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream&) {
  const auto manifest = load_manifest(a.manifest);
  const auto images = load_dataset(manifest);
  std::optional<Model> model;
  Upscaler up;
  if (!a.checkpoint.empty()) {
    if (!a.baseline.empty()) throw ConfigError("--checkpoint and --baseline are exclusive");
    model.emplace(model_from_checkpoint(load_checkpoint(a.checkpoint)));
    if (model->config().scale != manifest.scale)
      throw ConfigError("model scale " + std::to_string(model->config().scale) + " does not match manifest scale " +
                        std::to_string(manifest.scale));
    up = model_upscaler(*model);
  } else if (a.baseline == "bicubic") {
    up = bicubic_upscaler(manifest.scale);
  } else if (a.baseline == "identity") {
    up = identity_upscaler();
  } else {
    throw ConfigError("eval needs --checkpoint or --baseline bicubic|identity");
  }
  const auto result = evaluate_dataset(up, images, manifest.scale, a.crop, a.quantize_first);
  write_report_jsonl(a.report, result);
  out << std::left << std::setw(24) << "image" << std::right << std::setw(12) << "PSNR(dB)" << std::setw(10) << "SSIM" << "\n";
  auto row = [&](const MetricReport& m) {
    out << std::left << std::setw(24) << m.name << std::right << std::setw(12) << fmt_psnr(m.psnr_db) << std::setw(10)
        << std::fixed << std::setprecision(4) << m.ssim << "\n";
    out.unsetf(std::ios::fixed);
  };
  for (const auto& m : result.images) row(m);
  row(result.aggregate);
  out << "scale " << result.aggregate.scale << ", crop " << result.aggregate.crop << ", Y channel\n";
  return kExitOk;
}

int cmd_upscale(const UpscaleArgs& a, std::ostream& out, std::ostream&) {
  const auto model = model_from_checkpoint(load_checkpoint(a.checkpoint));
  const auto lr = load_png(a.input);
  const auto sr = upscale_image(model, lr);
  save_png(a.output, sr);
  out << a.output << " " << sr.width << "x" << sr.height << "\n";
  return kExitOk;
}

int cmd_info(const InfoArgs& a, std::ostream& out, std::ostream&) {
  if (a.config.empty() == a.preset.empty()) throw ConfigError("info needs exactly one of --config or --preset");
  const auto cfg = a.config.empty() ? preset_config(a.preset, a.sets) : load_config(a.config, a.sets);
  const auto& m = cfg.model;
  const auto params = count_params(m);
  const auto f = flop_breakdown(m, a.height, a.width);
  out << "model " << m.name << ": scale x" << m.scale << ", C=" << m.embed_dim << ", N1=" << m.num_groups
      << ", N2=" << m.blocks_per_group << ", M=" << m.window << " (Mo=" << m.overlap_window() << "), heads "
      << m.num_heads << ", ffn " << ffn_kind_name(m.ffn_kind) << (m.use_cab ? ", cab" : "") << "\n";
  out << std::fixed << std::setprecision(4);
  out << "params " << params << " (" << params / 1e6 << " M)\n";
  out << "flops at 3x" << a.height << "x" << a.width << " output: " << f.flops() / 1e9 << " G\n";
  out << "  conv " << 2 * f.conv_macs / 1e9 << " G, linear " << 2 * f.linear_macs / 1e9 << " G, attention "
      << 2 * f.attention_macs / 1e9 << " G, scan " << 2 * f.scan_macs / 1e9 << " G\n";
  out.unsetf(std::ios::fixed);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hybrid convolution / state-space / attention super-resolution"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a model from a TOML config");
  train->add_option("--config", ta.config, "config file")->required();
  train->add_option("--resume", ta.resume, "checkpoint to continue from");
  train->add_option("--out", ta.out, "output directory")->required();
  train->add_option("--set", ta.sets, "override, e.g. train.base_lr=1e-3 (repeatable)");
  train->add_option("--steps", ta.steps, "stop after this many steps");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Y-channel PSNR/SSIM over a manifest");
  eval->add_option("--checkpoint", ea.checkpoint, "model checkpoint");
  eval->add_option("--baseline", ea.baseline, "bicubic or identity instead of a model");
  eval->add_option("--manifest", ea.manifest, "dataset manifest (JSON)")->required();
  eval->add_option("--report", ea.report, "JSON-lines report path")->required();
  eval->add_option("--crop", ea.crop, "border crop (default: scale)");
  eval->add_flag("--quantize-first", ea.quantize_first, "round SR to 8 bits before metrics");

  UpscaleArgs ua;
  auto* upscale = app.add_subcommand("upscale", "super-resolve one PNG");
  upscale->add_option("--checkpoint", ua.checkpoint, "model checkpoint")->required();
  upscale->add_option("--input", ua.input, "input PNG")->required();
  upscale->add_option("--output", ua.output, "output PNG")->required();

  InfoArgs ia;
  auto* info = app.add_subcommand("info", "parameter and FLOP accounting");
  info->add_option("--config", ia.config, "config file");
  info->add_option("--preset", ia.preset, "contrast, contrast-s or tiny");
  info->add_option("--set", ia.sets, "override (repeatable)");
  info->add_option("--height", ia.height, "output height")->check(CLI::PositiveNumber);
  info->add_option("--width", ia.width, "output width")->check(CLI::PositiveNumber);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(ta, out, err);
    if (*eval) return cmd_eval(ea, out, err);
    if (*upscale) return cmd_upscale(ua, out, err);
    if (*info) return cmd_info(ia, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace contrast::cli
