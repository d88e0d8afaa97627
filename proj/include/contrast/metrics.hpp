#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "contrast/data.hpp"
#include "contrast/model.hpp"

namespace contrast {

struct YPlane {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<double> values;  // row-major, studio swing [16, 235]
};

inline constexpr double kPsnrSentinel = std::numeric_limits<double>::infinity();

/// BT.601 luma on the 0..255 scale. `quantize_first` rounds RGB to 8 bits
/// before conversion.
YPlane rgb_to_y(const ImagePlane& img, bool quantize_first = false);
YPlane crop_border(const YPlane& y, std::int64_t crop);

double psnr_plane(const YPlane& a, const YPlane& b);
double ssim_plane(const YPlane& a, const YPlane& b);

double psnr_y(const ImagePlane& sr, const ImagePlane& hr, std::int64_t crop, bool quantize_first = false);
double ssim_y(const ImagePlane& sr, const ImagePlane& hr, std::int64_t crop, bool quantize_first = false);

struct MetricReport {
  std::string name;
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::int64_t scale = 0;
  std::int64_t crop = 0;
};

struct EvaluationResult {
  std::vector<MetricReport> images;
  MetricReport aggregate;  // arithmetic means, name "mean"
};

using Upscaler = std::function<ImagePlane(const ImagePlane& lr)>;

/// SR for one image; pads/crops internally, output clamped to [0, 1].
ImagePlane upscale_image(const Model& model, const ImagePlane& lr);
Upscaler model_upscaler(const Model& model);
Upscaler bicubic_upscaler(std::int64_t scale);
// Returns the LR unchanged; with an LR=HR manifest this is the identity model.
Upscaler identity_upscaler();

/// crop < 0 selects crop = scale.
EvaluationResult evaluate_dataset(const Upscaler& up, const std::vector<LoadedImage>& images, std::int64_t scale,
                                  std::int64_t crop = -1, bool quantize_first = false);

/// One JSON object per line; +inf PSNR is written as the string "inf".
void write_report_jsonl(const std::filesystem::path& path, const EvaluationResult& r);
std::string report_line(const MetricReport& m);

}  // namespace contrast
