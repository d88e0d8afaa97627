#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "contrast/nn.hpp"
#include "contrast/tensor.hpp"

namespace contrast {

// Row-major RGB, interleaved, values nominally in [0, 1].
struct ImagePlane {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<double> pixels;

  ImagePlane() = default;
  ImagePlane(std::int64_t h, std::int64_t w, double fill = 0.0);

  double& at(std::int64_t y, std::int64_t x, int c) { return pixels[static_cast<std::size_t>((y * width + x) * 3 + c)]; }
  double at(std::int64_t y, std::int64_t x, int c) const {
    return pixels[static_cast<std::size_t>((y * width + x) * 3 + c)];
  }
  bool operator==(const ImagePlane&) const = default;
};

ImagePlane load_png(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const ImagePlane& img);

std::uint8_t quantize_u8(double v);  // clamp to [0, 1], scale, round half away from zero
ImagePlane quantize(const ImagePlane& img);
ImagePlane clamp01(ImagePlane img);

/// Antialiased cubic resampling (a = -0.5) with symmetric boundary handling.
/// Output clamped to [0, 1]. Per-axis scale is out / in.
ImagePlane bicubic_resize(const ImagePlane& img, std::int64_t out_h, std::int64_t out_w);
/// Same, but with an explicit scale factor used for the kernel geometry;
/// out extents are ceil(in * factor).
ImagePlane bicubic_rescale(const ImagePlane& img, double factor);

/// One resampling matrix row per output sample: (first input index, weights).
/// Indices are already folded back into [0, in_len).
struct ResampleWeights {
  std::vector<std::vector<std::pair<std::int64_t, double>>> rows;
};
ResampleWeights cubic_weights(std::int64_t in_len, std::int64_t out_len, double scale);
double cubic_kernel(double x);

ImagePlane modcrop(const ImagePlane& img, std::int64_t scale);
/// Bicubic x(1/scale) of a modcropped HR, re-quantized to 8 bits the way
/// benchmark LR files are stored.
ImagePlane degrade(const ImagePlane& hr, std::int64_t scale);

ImagePlane crop(const ImagePlane& img, std::int64_t y, std::int64_t x, std::int64_t h, std::int64_t w);

struct PatchPair {
  ImagePlane lr;
  ImagePlane hr;
};

/// Aligned crop: LR at (y, x), HR at (scale y, scale x). DataError when the
/// patch does not fit.
PatchPair crop_patch_pair(const ImagePlane& lr, const ImagePlane& hr, std::int64_t scale, std::int64_t patch,
                          std::int64_t y, std::int64_t x);
PatchPair sample_patch_pair(const ImagePlane& lr, const ImagePlane& hr, std::int64_t scale, std::int64_t patch, Rng& rng);
PatchPair sample_patch_pair(const ImagePlane& hr, std::int64_t scale, std::int64_t patch, Rng& rng);

/// rot90^k (counter-clockwise) applied after an optional horizontal flip.
ImagePlane dihedral(const ImagePlane& img, int rotations, bool flip);
PatchPair augment(const PatchPair& pair, Rng& rng);

struct ManifestEntry {
  std::filesystem::path hr;
  std::optional<std::filesystem::path> lr;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;
  std::int64_t scale = 4;
  bool on_the_fly_lr = true;  // true when some entry has no LR file
};

/// JSON {scale, entries: [{hr, lr?}]}; relative paths resolve against the
/// manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);
/// Scans root/HR/*.png, pairing root/LRbicX{scale}/<same name> when present.
DatasetManifest manifest_from_directory(const std::filesystem::path& root, std::int64_t scale);

/// Cache location for the LR of `hr`: <HR dir's parent>/LRbicX{s}/<name> if
/// the HR file lives in a directory named HR, otherwise <HR dir>/LRbicX{s}/.
std::filesystem::path lr_cache_path(const std::filesystem::path& hr, std::int64_t scale);

struct LoadedImage {
  std::string name;
  ImagePlane lr;
  ImagePlane hr;
};

/// Loads every pair; missing LR images are generated with degrade() and,
/// when write_cache is set, written to lr_cache_path.
std::vector<LoadedImage> load_dataset(const DatasetManifest& manifest, bool write_cache = true);

Tensor images_to_tensor(const std::vector<ImagePlane>& images);
ImagePlane tensor_to_image(const Tensor& t, std::int64_t index = 0);

struct Batch {
  Tensor lr;                // (B, 3, p, p)
  Tensor hr;                // (B, 3, s p, s p)
  std::string rng_after;    // sampler state once this batch was drawn
};

struct BatchSpec {
  std::int64_t batch = 32;
  std::int64_t patch = 64;
  std::int64_t scale = 4;
  bool augment = true;
  std::int64_t prefetch = 2;  // 0 draws synchronously
};

// Infinite stream of random patch batches. With prefetch > 0 one worker
// thread fills a bounded queue; batches come out in the same order as a
// synchronous draw from the same sampler state.
class BatchIterator {
 public:
  BatchIterator(std::shared_ptr<const std::vector<LoadedImage>> images, BatchSpec spec, Rng rng);
  ~BatchIterator();
  BatchIterator(const BatchIterator&) = delete;
  BatchIterator& operator=(const BatchIterator&) = delete;

  Batch next();

 private:
  Batch draw();
  void worker();

  std::shared_ptr<const std::vector<LoadedImage>> images_;
  BatchSpec spec_;
  Rng rng_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Batch> queue_;
  std::exception_ptr error_;
  bool stop_ = false;
  std::thread thread_;
};

std::string rng_to_string(const Rng& rng);
Rng rng_from_string(const std::string& s);

}  // namespace contrast
