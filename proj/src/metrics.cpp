#include "contrast/metrics.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "contrast/errors.hpp"
#include "contrast/ops.hpp"

namespace contrast {

YPlane rgb_to_y(const ImagePlane& img, bool quantize_first) {
  YPlane y{img.height, img.width, std::vector<double>(static_cast<std::size_t>(img.height * img.width))};
  for (std::size_t i = 0; i < y.values.size(); ++i) {
    double r = img.pixels[3 * i], g = img.pixels[3 * i + 1], b = img.pixels[3 * i + 2];
    if (quantize_first) {
      r = quantize_u8(r) / 255.0;
      g = quantize_u8(g) / 255.0;
      b = quantize_u8(b) / 255.0;
    }
    y.values[i] = 65.481 * r + 128.553 * g + 24.966 * b + 16.0;
  }
  return y;
}

YPlane crop_border(const YPlane& y, std::int64_t crop) {
  if (crop < 0 || 2 * crop >= y.height || 2 * crop >= y.width)
    throw ShapeError("crop " + std::to_string(crop) + " too large for " + std::to_string(y.height) + "x" +
                     std::to_string(y.width));
  if (crop == 0) return y;
  YPlane out{y.height - 2 * crop, y.width - 2 * crop, {}};
  out.values.reserve(static_cast<std::size_t>(out.height * out.width));
  for (std::int64_t r = crop; r < y.height - crop; ++r)
    for (std::int64_t c = crop; c < y.width - crop; ++c) out.values.push_back(y.values[static_cast<std::size_t>(r * y.width + c)]);
  return out;
}

double psnr_plane(const YPlane& a, const YPlane& b) {
  if (a.height != b.height || a.width != b.width) throw ShapeError("psnr: extent mismatch");
  double se = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.values.size());
  if (mse == 0.0) return kPsnrSentinel;
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

std::vector<double> gaussian_window() {
  std::vector<double> g(kSsimWindow);
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    g[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return g;
}

// Valid-region separable filtering.
std::vector<double> filter_valid(const std::vector<double>& src, std::int64_t h, std::int64_t w, const std::vector<double>& g) {
  const std::int64_t k = kSsimWindow, oh = h - k + 1, ow = w - k + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h * ow));
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < k; ++i) acc += g[i] * src[static_cast<std::size_t>(y * w + x + i)];
      tmp[static_cast<std::size_t>(y * ow + x)] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh * ow));
  for (std::int64_t y = 0; y < oh; ++y)
    for (std::int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < k; ++i) acc += g[i] * tmp[static_cast<std::size_t>((y + i) * ow + x)];
      out[static_cast<std::size_t>(y * ow + x)] = acc;
    }
  return out;
}

}  // namespace

double ssim_plane(const YPlane& a, const YPlane& b) {
  if (a.height != b.height || a.width != b.width) throw ShapeError("ssim: extent mismatch");
  if (a.height < kSsimWindow || a.width < kSsimWindow) throw DataError("ssim needs at least 11x11 pixels after cropping");
  const double c1 = (0.01 * 255.0) * (0.01 * 255.0), c2 = (0.03 * 255.0) * (0.03 * 255.0);
  const auto g = gaussian_window();
  const auto n = a.values.size();
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a.values[i] * a.values[i];
    bb[i] = b.values[i] * b.values[i];
    ab[i] = a.values[i] * b.values[i];
  }
  const auto mu1 = filter_valid(a.values, a.height, a.width, g), mu2 = filter_valid(b.values, a.height, a.width, g);
  const auto s11 = filter_valid(aa, a.height, a.width, g), s22 = filter_valid(bb, a.height, a.width, g),
             s12 = filter_valid(ab, a.height, a.width, g);
  double total = 0.0;
  for (std::size_t i = 0; i < mu1.size(); ++i) {
    const double m1 = mu1[i], m2 = mu2[i];
    const double v1 = s11[i] - m1 * m1, v2 = s22[i] - m2 * m2, cov = s12[i] - m1 * m2;
    total += ((2 * m1 * m2 + c1) * (2 * cov + c2)) / ((m1 * m1 + m2 * m2 + c1) * (v1 + v2 + c2));
  }
  return total / static_cast<double>(mu1.size());
}

double psnr_y(const ImagePlane& sr, const ImagePlane& hr, std::int64_t crop, bool quantize_first) {
  if (sr.height != hr.height || sr.width != hr.width) throw ShapeError("psnr_y: extent mismatch");
  return psnr_plane(crop_border(rgb_to_y(sr, quantize_first), crop), crop_border(rgb_to_y(hr, quantize_first), crop));
}

double ssim_y(const ImagePlane& sr, const ImagePlane& hr, std::int64_t crop, bool quantize_first) {
  if (sr.height != hr.height || sr.width != hr.width) throw ShapeError("ssim_y: extent mismatch");
  return ssim_plane(crop_border(rgb_to_y(sr, quantize_first), crop), crop_border(rgb_to_y(hr, quantize_first), crop));
}

ImagePlane upscale_image(const Model& model, const ImagePlane& lr) {
  autograd::NoGradGuard guard;
  auto out = model.forward(images_to_tensor({lr}));
  return clamp01(tensor_to_image(out));
}

Upscaler model_upscaler(const Model& model) {
  return [&model](const ImagePlane& lr) { return upscale_image(model, lr); };
}

Upscaler bicubic_upscaler(std::int64_t scale) {
  return [scale](const ImagePlane& lr) { return bicubic_rescale(lr, static_cast<double>(scale)); };
}

Upscaler identity_upscaler() {
  return [](const ImagePlane& lr) { return lr; };
}

EvaluationResult evaluate_dataset(const Upscaler& up, const std::vector<LoadedImage>& images, std::int64_t scale,
                                  std::int64_t crop, bool quantize_first) {
  if (images.empty()) throw DataError("evaluate_dataset: no images");
  if (crop < 0) crop = scale;
  EvaluationResult r;
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (const auto& img : images) {
    const auto sr = up(img.lr);
    if (sr.height != img.hr.height || sr.width != img.hr.width)
      throw ShapeError("SR of '" + img.name + "' is " + std::to_string(sr.height) + "x" + std::to_string(sr.width) +
                       ", HR is " + std::to_string(img.hr.height) + "x" + std::to_string(img.hr.width));
    MetricReport m{img.name, psnr_y(sr, img.hr, crop, quantize_first), ssim_y(sr, img.hr, crop, quantize_first), scale, crop};
    psnr_sum += m.psnr_db;
    ssim_sum += m.ssim;
    r.images.push_back(std::move(m));
  }
  const double n = static_cast<double>(images.size());
  r.aggregate = {"mean", psnr_sum / n, ssim_sum / n, scale, crop};
  return r;
}

std::string report_line(const MetricReport& m) {
  nlohmann::json j{{"name", m.name}, {"ssim", m.ssim}, {"scale", m.scale}, {"crop", m.crop}};
  if (std::isinf(m.psnr_db))
    j["psnr_db"] = "inf";
  else
    j["psnr_db"] = m.psnr_db;
  return j.dump();
}

void write_report_jsonl(const std::filesystem::path& path, const EvaluationResult& r) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write report " + path.string());
  for (const auto& m : r.images) os << report_line(m) << '\n';
  auto agg = nlohmann::json::parse(report_line(r.aggregate));
  agg["aggregate"] = true;
  agg["count"] = r.images.size();
  os << agg.dump() << '\n';
}

}  // namespace contrast
