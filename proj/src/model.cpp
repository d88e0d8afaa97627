#include "contrast/model.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "contrast/ops.hpp"

namespace contrast {

std::int64_t ModelConfig::inner_dim() const { return std::llround(ssm_ratio * static_cast<double>(embed_dim)); }
std::int64_t ModelConfig::ffn_hidden() const { return std::llround(mlp_ratio * static_cast<double>(embed_dim)); }
std::int64_t ModelConfig::resolved_dt_rank() const { return dt_rank > 0 ? dt_rank : (embed_dim + 15) / 16; }
std::int64_t ModelConfig::overlap_window() const { return overlap_window_size(window, overlap_ratio); }

void ModelConfig::validate() const {
  auto fail = [this](const std::string& msg) { throw ConfigError("model '" + name + "': " + msg); };
  if (scale != 2 && scale != 3 && scale != 4) fail("scale must be 2, 3 or 4, got " + std::to_string(scale));
  if (embed_dim <= 0) fail("embed_dim must be positive");
  if (num_groups <= 0 || blocks_per_group <= 0) fail("num_groups and blocks_per_group must be positive");
  if (window <= 0) fail("window must be positive");
  if (overlap_ratio < 0.0 || overlap_ratio >= 1.0) fail("overlap_ratio must be in [0, 1)");
  if (num_heads <= 0 || embed_dim % num_heads != 0) fail("embed_dim must be divisible by num_heads");
  if (ffn_hidden() <= 0) fail("mlp_ratio gives an empty hidden layer");
  if (ffn_kind == FfnKind::sgfn && ffn_hidden() % 2 != 0) fail("SGFN hidden width must be even");
  if (ssm_state_dim <= 0) fail("ssm_state_dim must be positive");
  if (inner_dim() <= 0) fail("ssm_ratio gives an empty inner width");
  if (dt_rank < 0) fail("dt_rank must be >= 0");
  if (upsample_features < 0) fail("upsample_features must be >= 0");
}

ModelConfig model_preset(std::string_view name) {
  ModelConfig c;
  if (name == "contrast") {
    c.name = "contrast";
  } else if (name == "contrast-s") {
    c.name = "contrast-s";
    c.embed_dim = 150;
    c.window = 16;
  } else if (name == "tiny") {
    c.name = "tiny";
    c.scale = 2;
    c.embed_dim = 8;
    c.num_groups = 1;
    c.blocks_per_group = 2;
    c.window = 4;
    c.num_heads = 2;
    c.upsample_features = 16;
  } else {
    throw ConfigError("unknown model preset '" + std::string(name) + "'");
  }
  return c;
}

std::vector<std::string> model_preset_names() { return {"contrast", "contrast-s", "tiny"}; }

std::string ffn_kind_name(FfnKind k) { return k == FfnKind::sgfn ? "sgfn" : "mlp"; }

FfnKind parse_ffn_kind(std::string_view s) {
  if (s == "sgfn") return FfnKind::sgfn;
  if (s == "mlp") return FfnKind::mlp;
  throw ConfigError("ffn_kind must be 'sgfn' or 'mlp', got '" + std::string(s) + "'");
}

std::string model_config_to_json(const ModelConfig& c) {
  nlohmann::json j{{"name", c.name},
                   {"scale", c.scale},
                   {"embed_dim", c.embed_dim},
                   {"num_groups", c.num_groups},
                   {"blocks_per_group", c.blocks_per_group},
                   {"window", c.window},
                   {"overlap_ratio", c.overlap_ratio},
                   {"num_heads", c.num_heads},
                   {"mlp_ratio", c.mlp_ratio},
                   {"ssm_state_dim", c.ssm_state_dim},
                   {"ssm_ratio", c.ssm_ratio},
                   {"dt_rank", c.dt_rank},
                   {"use_cab", c.use_cab},
                   {"ffn_kind", ffn_kind_name(c.ffn_kind)},
                   {"ss2d_gated", c.ss2d_gated},
                   {"upsample_features", c.upsample_features}};
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    ModelConfig c;
    c.name = j.at("name").get<std::string>();
    c.scale = j.at("scale").get<std::int64_t>();
    c.embed_dim = j.at("embed_dim").get<std::int64_t>();
    c.num_groups = j.at("num_groups").get<std::int64_t>();
    c.blocks_per_group = j.at("blocks_per_group").get<std::int64_t>();
    c.window = j.at("window").get<std::int64_t>();
    c.overlap_ratio = j.at("overlap_ratio").get<double>();
    c.num_heads = j.at("num_heads").get<std::int64_t>();
    c.mlp_ratio = j.at("mlp_ratio").get<double>();
    c.ssm_state_dim = j.at("ssm_state_dim").get<std::int64_t>();
    c.ssm_ratio = j.at("ssm_ratio").get<double>();
    c.dt_rank = j.at("dt_rank").get<std::int64_t>();
    c.use_cab = j.at("use_cab").get<bool>();
    c.ffn_kind = parse_ffn_kind(j.at("ffn_kind").get<std::string>());
    c.ss2d_gated = j.at("ss2d_gated").get<bool>();
    c.upsample_features = j.at("upsample_features").get<std::int64_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad model config json: ") + e.what());
  }
}

std::vector<std::int64_t> upsample_factors(std::int64_t scale) {
  switch (scale) {
    case 2: return {2};
    case 3: return {3};
    case 4: return {2, 2};
    default: throw ConfigError("unsupported scale " + std::to_string(scale));
  }
}

ModelParams init_model_params(Rng& rng, const ModelConfig& cfg) {
  cfg.validate();
  const auto C = cfg.embed_dim;
  ModelParams p;
  p.shallow = init::conv2d(rng, 3, C, 3);
  const Ss2dDims dims{C, cfg.inner_dim(), cfg.ssm_state_dim, cfg.resolved_dt_rank(), cfg.ss2d_gated};
  for (std::int64_t g = 0; g < cfg.num_groups; ++g) {
    ResidualGroupParams rg;
    for (std::int64_t b = 0; b < cfg.blocks_per_group; ++b) {
      VssBlockParams blk;
      blk.norm1 = init::layer_norm(C);
      blk.ss2d = init_ss2d(rng, dims);
      if (cfg.use_cab) blk.cab = init_cab(rng, C);
      blk.norm2 = init::layer_norm(C);
      blk.ffn = init_ffn(rng, cfg.ffn_kind, C, cfg.ffn_hidden());
      rg.blocks.push_back(std::move(blk));
    }
    rg.ocab = init_ocab(rng, C, cfg.num_heads, cfg.window, cfg.overlap_ratio, cfg.ffn_kind, cfg.ffn_hidden());
    rg.conv = init::conv2d(rng, C, C, 3);
    p.groups.push_back(std::move(rg));
  }
  p.body_conv = init::conv2d(rng, C, C, 3);
  const auto F = cfg.head_features();
  if (cfg.upsample_features > 0) p.head.pre = init::conv2d(rng, C, F, 3);
  p.head.factors = upsample_factors(cfg.scale);
  for (auto r : p.head.factors) p.head.stages.push_back(init::conv2d(rng, F, F * r * r, 3));
  p.head.last = init::conv2d(rng, F, 3, 3);
  return p;
}

void register_params(ParamRegistry& reg, const ModelParams& p) {
  register_params(reg, "shallow", p.shallow);
  for (std::size_t g = 0; g < p.groups.size(); ++g) {
    const auto pre = "group" + std::to_string(g);
    const auto& rg = p.groups[g];
    for (std::size_t b = 0; b < rg.blocks.size(); ++b) register_params(reg, pre + ".vss" + std::to_string(b), rg.blocks[b]);
    register_params(reg, pre + ".ocab", rg.ocab);
    register_params(reg, pre + ".conv", rg.conv);
  }
  register_params(reg, "body_conv", p.body_conv);
  if (p.head.pre) register_params(reg, "head.pre", *p.head.pre);
  for (std::size_t s = 0; s < p.head.stages.size(); ++s) register_params(reg, "head.stage" + std::to_string(s), p.head.stages[s]);
  register_params(reg, "head.last", p.head.last);
}

Tensor shallow_extract(const Tensor& lr, const Conv2dParams& conv) {
  if (lr.rank() != 4 || lr.dim(1) != 3) throw ShapeError("shallow_extract expects (b, 3, h, w), got " + shape_str(lr.shape()));
  return conv2d(lr, conv);
}

Tensor residual_group(const Tensor& f, const ResidualGroupParams& p) {
  if (f.rank() != 4) throw ShapeError("residual_group expects NCHW");
  const auto h = f.dim(2), w = f.dim(3);
  auto t = to_tokens(f);
  for (const auto& blk : p.blocks) t = vss_block_tokens(t, h, w, blk);
  t = ocab_block_tokens(t, h, w, p.ocab);
  return add(conv2d(from_tokens(t, h, w), p.conv), f);
}

Tensor deep_extract(const Tensor& fs, const std::vector<ResidualGroupParams>& groups, const Conv2dParams& body_conv,
                    std::int64_t window) {
  if (fs.rank() != 4) throw ShapeError("deep_extract expects NCHW");
  const auto h = fs.dim(2), w = fs.dim(3);
  const auto pad_h = (window - h % window) % window, pad_w = (window - w % window) % window;
  auto f = (pad_h || pad_w) ? pad_reflect_bottom_right(fs, pad_h, pad_w) : fs;
  for (const auto& g : groups) f = residual_group(f, g);
  f = conv2d(f, body_conv);
  if (pad_h || pad_w) f = crop_top_left(f, h, w);
  return add(f, fs);
}

Tensor reconstruct(const Tensor& fd, const ReconstructParams& p) {
  if (p.stages.size() != p.factors.size()) throw ConfigError("reconstruct: stage/factor count mismatch");
  auto x = fd;
  if (p.pre) x = leaky_relu(conv2d(x, *p.pre));
  for (std::size_t s = 0; s < p.stages.size(); ++s) x = pixel_shuffle(conv2d(x, p.stages[s]), p.factors[s]);
  return conv2d(x, p.last);
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  Rng rng(seed);
  params_ = init_model_params(rng, cfg_);
  register_params(registry_, params_);
}

Tensor Model::forward(const Tensor& lr) const {
  if (lr.rank() != 4 || lr.dim(1) != 3) throw ShapeError("model input must be (b, 3, h, w), got " + shape_str(lr.shape()));
  const Tensor mean_rgb({1, 3, 1, 1}, {kRgbMean[0], kRgbMean[1], kRgbMean[2]});
  auto fs = shallow_extract(sub(lr, mean_rgb), params_.shallow);
  auto fd = deep_extract(fs, params_.groups, params_.body_conv, cfg_.window);
  return add(reconstruct(fd, params_.head), mean_rgb);
}

}  // namespace contrast
