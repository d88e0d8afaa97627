#include <algorithm>

#include "contrast/model.hpp"

namespace contrast {

namespace {

using i64 = std::int64_t;

i64 conv_params(i64 cin, i64 cout, i64 k, i64 groups = 1) { return k * k * (cin / groups) * cout + cout; }
i64 linear_params(i64 in, i64 out, bool bias = true) { return in * out + (bias ? out : 0); }
i64 norm_params(i64 c) { return 2 * c; }

i64 cab_mid(i64 c) { return std::max<i64>(1, c / kCabCompressRatio); }
i64 cab_squeeze(i64 c) { return std::max<i64>(1, c / kCabSqueezeFactor); }

i64 ffn_params(const ModelConfig& cfg) {
  const auto C = cfg.embed_dim, H = cfg.ffn_hidden();
  if (cfg.ffn_kind == FfnKind::mlp) return linear_params(C, H) + linear_params(H, C);
  return linear_params(C, H) + conv_params(H / 2, H / 2, 3, H / 2) + linear_params(H / 2, C);
}

i64 ss2d_params(const ModelConfig& cfg) {
  const auto C = cfg.embed_dim, D = cfg.inner_dim(), S = cfg.ssm_state_dim, R = cfg.resolved_dt_rank();
  i64 n = linear_params(C, D) + conv_params(D, D, 3, D) + norm_params(D) + linear_params(D, C);
  if (cfg.ss2d_gated) n += linear_params(C, D);
  // per direction: A_log, D, x_proj (no bias), delta_proj
  n += 4 * (D * S + D + linear_params(D, R + 2 * S, false) + linear_params(R, D));
  return n;
}

i64 vss_params(const ModelConfig& cfg) {
  const auto C = cfg.embed_dim;
  i64 n = 2 * norm_params(C) + ss2d_params(cfg) + ffn_params(cfg);
  if (cfg.use_cab) {
    const auto mid = cab_mid(C), sq = cab_squeeze(C);
    n += conv_params(C, mid, 3) + conv_params(mid, C, 3) + conv_params(C, sq, 1) + conv_params(sq, C, 1);
  }
  return n;
}

i64 ocab_params(const ModelConfig& cfg) {
  const auto C = cfg.embed_dim, span = cfg.window + cfg.overlap_window() - 1;
  return 2 * norm_params(C) + 2 * linear_params(C, C) + linear_params(C, 2 * C) + cfg.num_heads * span * span +
         ffn_params(cfg);
}

i64 head_params(const ModelConfig& cfg) {
  const auto C = cfg.embed_dim, F = cfg.head_features();
  i64 n = cfg.upsample_features > 0 ? conv_params(C, F, 3) : 0;
  for (auto r : upsample_factors(cfg.scale)) n += conv_params(F, F * r * r, 3);
  return n + conv_params(F, 3, 3);
}

i64 ceil_to(i64 v, i64 m) { return (v + m - 1) / m * m; }

}  // namespace

std::int64_t count_params(const ModelConfig& cfg) {
  cfg.validate();
  const auto C = cfg.embed_dim;
  const i64 group = cfg.blocks_per_group * vss_params(cfg) + ocab_params(cfg) + conv_params(C, C, 3);
  return conv_params(3, C, 3) + cfg.num_groups * group + conv_params(C, C, 3) + head_params(cfg);
}

FlopBreakdown flop_breakdown(const ModelConfig& cfg, std::int64_t out_h, std::int64_t out_w) {
  cfg.validate();
  if (out_h <= 0 || out_w <= 0) throw ConfigError("output extents must be positive");
  const auto C = cfg.embed_dim, D = cfg.inner_dim(), S = cfg.ssm_state_dim, R = cfg.resolved_dt_rank();
  const auto Hd = cfg.ffn_hidden(), M = cfg.window, Mo = cfg.overlap_window();
  const i64 h = (out_h + cfg.scale - 1) / cfg.scale, w = (out_w + cfg.scale - 1) / cfg.scale;
  const i64 L = ceil_to(h, M) * ceil_to(w, M);  // body runs on the padded map

  FlopBreakdown f;
  auto ffn = [&] {
    if (cfg.ffn_kind == FfnKind::mlp) {
      f.linear_macs += 2 * C * Hd * L;
    } else {
      f.linear_macs += C * Hd * L + (Hd / 2) * C * L;
      f.conv_macs += 9 * (Hd / 2) * L;
    }
  };

  f.conv_macs += 9 * 3 * C * h * w;
  for (i64 g = 0; g < cfg.num_groups; ++g) {
    for (i64 b = 0; b < cfg.blocks_per_group; ++b) {
      f.linear_macs += C * D * L * (cfg.ss2d_gated ? 2 : 1) + D * C * L;
      f.conv_macs += 9 * D * L;
      // per direction: x_proj, delta_proj; scan does 2 MACs per state
      // (decay and input) plus the readout, and the D skip
      f.linear_macs += 4 * (D * (R + 2 * S) * L + R * D * L);
      f.scan_macs += 4 * L * D * (3 * S + 1);
      if (cfg.use_cab) {
        const auto mid = cab_mid(C), sq = cab_squeeze(C);
        f.conv_macs += 2 * 9 * C * mid * L + 2 * C * sq;
      }
      ffn();
    }
    f.linear_macs += 4 * C * C * L;  // q, kv (2C), out
    f.attention_macs += 2 * L * Mo * Mo * C;  // QK^T and AV over every window and head
    ffn();
    f.conv_macs += 9 * C * C * L;
  }
  f.conv_macs += 9 * C * C * L;

  const auto F = cfg.head_features();
  i64 hc = h, wc = w;
  if (cfg.upsample_features > 0) f.conv_macs += 9 * C * F * hc * wc;
  for (auto r : upsample_factors(cfg.scale)) {
    f.conv_macs += 9 * F * F * r * r * hc * wc;
    hc *= r;
    wc *= r;
  }
  f.conv_macs += 9 * F * 3 * hc * wc;
  return f;
}

std::int64_t count_flops(const ModelConfig& cfg, std::int64_t out_h, std::int64_t out_w) {
  return flop_breakdown(cfg, out_h, out_w).flops();
}

}  // namespace contrast
