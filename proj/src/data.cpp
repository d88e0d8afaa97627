#include "contrast/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "contrast/errors.hpp"

namespace contrast {

namespace fs = std::filesystem;

ImagePlane::ImagePlane(std::int64_t h, std::int64_t w, double fill) : height(h), width(w) {
  if (h <= 0 || w <= 0) throw ShapeError("image extents must be positive");
  pixels.assign(static_cast<std::size_t>(h * w * 3), fill);
}

// ---------------------------------------------------------------- PNG

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* buf = static_cast<std::string*>(png_get_error_ptr(png));
  if (buf) *buf = msg;
  png_longjmp(png, 1);
}
void png_warning_fn(png_structp, png_const_charp) {}

// Reads into rows of 8- or 16-bit RGB. Kept free of non-trivial locals so
// the longjmp out of libpng does not skip destructors.
bool read_png_rows(std::FILE* f, std::string* err, png_uint_32* w, png_uint_32* h, int* depth,
                   std::vector<unsigned char>* buf) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, err, png_error_fn, png_warning_fn);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    return false;
  }
  png_init_io(png, f);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  *w = png_get_image_width(png, info);
  *h = png_get_image_height(png, info);
  *depth = png_get_bit_depth(png, info);
  const auto rowbytes = png_get_rowbytes(png, info);
  if (png_get_channels(png, info) != 3) {
    *err = "unexpected channel count after conversion";
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  buf->resize(static_cast<std::size_t>(rowbytes) * *h);
  std::vector<png_bytep> rows(*h);
  for (png_uint_32 y = 0; y < *h; ++y) rows[y] = buf->data() + static_cast<std::size_t>(y) * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

bool write_png_rows(std::FILE* f, std::string* err, png_uint_32 w, png_uint_32 h, const std::vector<unsigned char>* buf) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, err, png_error_fn, png_warning_fn);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    return false;
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = const_cast<png_bytep>(buf->data() + static_cast<std::size_t>(y) * w * 3);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace

ImagePlane load_png(const fs::path& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw FormatError("cannot open " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) throw FormatError(path.string() + " is not a PNG file");
  std::rewind(f.get());
  std::string err;
  png_uint_32 w = 0, h = 0;
  int depth = 0;
  std::vector<unsigned char> buf;
  if (!read_png_rows(f.get(), &err, &w, &h, &depth, &buf))
    throw FormatError("failed to decode " + path.string() + (err.empty() ? "" : ": " + err));
  ImagePlane img(h, w);
  const auto n = img.pixels.size();
  if (depth == 16) {
    for (std::size_t i = 0; i < n; ++i) img.pixels[i] = ((buf[2 * i] << 8) | buf[2 * i + 1]) / 65535.0;
  } else {
    for (std::size_t i = 0; i < n; ++i) img.pixels[i] = buf[i] / 255.0;
  }
  return img;
}

std::uint8_t quantize_u8(double v) {
  const double c = std::clamp(v, 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::lround(c));
}

ImagePlane quantize(const ImagePlane& img) {
  ImagePlane out = img;
  for (auto& v : out.pixels) v = quantize_u8(v) / 255.0;
  return out;
}

ImagePlane clamp01(ImagePlane img) {
  for (auto& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
  return img;
}

void save_png(const fs::path& path, const ImagePlane& img) {
  if (img.height <= 0 || img.width <= 0) throw ShapeError("cannot save an empty image");
  std::vector<unsigned char> buf(img.pixels.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = quantize_u8(img.pixels[i]);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  std::string err;
  if (!write_png_rows(f.get(), &err, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), &buf))
    throw Error("failed to encode " + path.string() + ": " + err);
}

// ---------------------------------------------------------------- resampling

double cubic_kernel(double x) {
  const double a = std::abs(x), a2 = a * a, a3 = a2 * a;
  if (a <= 1.0) return 1.5 * a3 - 2.5 * a2 + 1.0;
  if (a <= 2.0) return -0.5 * a3 + 2.5 * a2 - 4.0 * a + 2.0;
  return 0.0;
}

ResampleWeights cubic_weights(std::int64_t in_len, std::int64_t out_len, double scale) {
  const bool shrink = scale < 1.0;
  const double kernel_width = shrink ? 4.0 / scale : 4.0;
  const auto taps = static_cast<std::int64_t>(std::ceil(kernel_width)) + 2;
  ResampleWeights rw;
  rw.rows.resize(static_cast<std::size_t>(out_len));
  for (std::int64_t i = 0; i < out_len; ++i) {
    // 1-based output coordinate mapped into 1-based input space
    const double u = static_cast<double>(i + 1) / scale + 0.5 * (1.0 - 1.0 / scale);
    const auto left = static_cast<std::int64_t>(std::floor(u - kernel_width / 2.0));
    std::vector<std::pair<std::int64_t, double>> row;
    double total = 0.0;
    for (std::int64_t j = 0; j < taps; ++j) {
      const auto idx1 = left + j;
      const double d = u - static_cast<double>(idx1);
      const double wgt = shrink ? scale * cubic_kernel(scale * d) : cubic_kernel(d);
      if (wgt == 0.0) continue;
      // symmetric extension: ... 2 1 | 1 2 ... n | n n-1 ...
      auto m = (idx1 - 1) % (2 * in_len);
      if (m < 0) m += 2 * in_len;
      if (m >= in_len) m = 2 * in_len - 1 - m;
      row.emplace_back(m, wgt);
      total += wgt;
    }
    for (auto& [idx, wgt] : row) wgt /= total;
    rw.rows[static_cast<std::size_t>(i)] = std::move(row);
  }
  return rw;
}

namespace {

ImagePlane resize_impl(const ImagePlane& img, std::int64_t out_h, std::int64_t out_w, double sh, double sw) {
  if (out_h <= 0 || out_w <= 0) throw ShapeError("bicubic_resize: target extents must be positive");
  const auto H = img.height, W = img.width;
  ImagePlane tmp(out_h, W);
  if (out_h == H && sh == 1.0) {
    tmp = img;
  } else {
    const auto rh = cubic_weights(H, out_h, sh);
    for (std::int64_t y = 0; y < out_h; ++y)
      for (std::int64_t x = 0; x < W; ++x)
        for (int c = 0; c < 3; ++c) {
          double acc = 0.0;
          for (const auto& [iy, wgt] : rh.rows[static_cast<std::size_t>(y)]) acc += wgt * img.at(iy, x, c);
          tmp.at(y, x, c) = acc;
        }
  }
  ImagePlane out(out_h, out_w);
  if (out_w == W && sw == 1.0) {
    out = tmp;
  } else {
    const auto rw = cubic_weights(W, out_w, sw);
    for (std::int64_t y = 0; y < out_h; ++y)
      for (std::int64_t x = 0; x < out_w; ++x)
        for (int c = 0; c < 3; ++c) {
          double acc = 0.0;
          for (const auto& [ix, wgt] : rw.rows[static_cast<std::size_t>(x)]) acc += wgt * tmp.at(y, ix, c);
          out.at(y, x, c) = acc;
        }
  }
  return clamp01(std::move(out));
}

}  // namespace

ImagePlane bicubic_resize(const ImagePlane& img, std::int64_t out_h, std::int64_t out_w) {
  return resize_impl(img, out_h, out_w, static_cast<double>(out_h) / static_cast<double>(img.height),
                     static_cast<double>(out_w) / static_cast<double>(img.width));
}

ImagePlane bicubic_rescale(const ImagePlane& img, double factor) {
  if (!(factor > 0.0)) throw ShapeError("bicubic_rescale: factor must be positive");
  auto extent = [factor](std::int64_t n) {
    return static_cast<std::int64_t>(std::ceil(static_cast<double>(n) * factor - 1e-9));
  };
  return resize_impl(img, extent(img.height), extent(img.width), factor, factor);
}

ImagePlane modcrop(const ImagePlane& img, std::int64_t scale) {
  const auto h = img.height - img.height % scale, w = img.width - img.width % scale;
  if (h <= 0 || w <= 0) throw DataError("image smaller than the scale factor");
  return (h == img.height && w == img.width) ? img : crop(img, 0, 0, h, w);
}

ImagePlane degrade(const ImagePlane& hr, std::int64_t scale) {
  const auto base = modcrop(hr, scale);
  const double f = 1.0 / static_cast<double>(scale);
  return quantize(resize_impl(base, base.height / scale, base.width / scale, f, f));
}

// ---------------------------------------------------------------- patches

ImagePlane crop(const ImagePlane& img, std::int64_t y, std::int64_t x, std::int64_t h, std::int64_t w) {
  if (y < 0 || x < 0 || h <= 0 || w <= 0 || y + h > img.height || x + w > img.width)
    throw DataError("crop (" + std::to_string(y) + "," + std::to_string(x) + ") " + std::to_string(h) + "x" +
                    std::to_string(w) + " outside " + std::to_string(img.height) + "x" + std::to_string(img.width));
  ImagePlane out(h, w);
  for (std::int64_t r = 0; r < h; ++r) {
    const auto* src = &img.pixels[static_cast<std::size_t>(((y + r) * img.width + x) * 3)];
    std::copy(src, src + w * 3, &out.pixels[static_cast<std::size_t>(r * w * 3)]);
  }
  return out;
}

PatchPair crop_patch_pair(const ImagePlane& lr, const ImagePlane& hr, std::int64_t scale, std::int64_t patch,
                          std::int64_t y, std::int64_t x) {
  if (lr.height < patch || lr.width < patch)
    throw DataError("LR image " + std::to_string(lr.height) + "x" + std::to_string(lr.width) + " smaller than patch " +
                    std::to_string(patch));
  if (hr.height < lr.height * scale || hr.width < lr.width * scale) throw DataError("HR image smaller than scale x LR");
  return {crop(lr, y, x, patch, patch), crop(hr, y * scale, x * scale, patch * scale, patch * scale)};
}

PatchPair sample_patch_pair(const ImagePlane& lr, const ImagePlane& hr, std::int64_t scale, std::int64_t patch, Rng& rng) {
  if (lr.height < patch || lr.width < patch)
    throw DataError("LR image " + std::to_string(lr.height) + "x" + std::to_string(lr.width) + " smaller than patch " +
                    std::to_string(patch));
  std::uniform_int_distribution<std::int64_t> dy(0, lr.height - patch), dx(0, lr.width - patch);
  const auto y = dy(rng);
  const auto x = dx(rng);
  return crop_patch_pair(lr, hr, scale, patch, y, x);
}

PatchPair sample_patch_pair(const ImagePlane& hr, std::int64_t scale, std::int64_t patch, Rng& rng) {
  const auto base = modcrop(hr, scale);
  return sample_patch_pair(degrade(base, scale), base, scale, patch, rng);
}

ImagePlane dihedral(const ImagePlane& img, int rotations, bool flip) {
  if (img.height != img.width) throw DataError("dihedral transforms need a square patch");
  const auto n = img.height;
  ImagePlane cur = img;
  if (flip) {
    for (std::int64_t y = 0; y < n; ++y)
      for (std::int64_t x = 0; x < n; ++x)
        for (int c = 0; c < 3; ++c) cur.at(y, x, c) = img.at(y, n - 1 - x, c);
  }
  for (int r = 0; r < ((rotations % 4) + 4) % 4; ++r) {
    ImagePlane next(n, n);
    // counter-clockwise: new(y, x) = old(x, n-1-y)
    for (std::int64_t y = 0; y < n; ++y)
      for (std::int64_t x = 0; x < n; ++x)
        for (int c = 0; c < 3; ++c) next.at(y, x, c) = cur.at(x, n - 1 - y, c);
    cur = std::move(next);
  }
  return cur;
}

PatchPair augment(const PatchPair& pair, Rng& rng) {
  if (pair.lr.height != pair.lr.width || pair.hr.height != pair.hr.width) throw DataError("augment needs square patches");
  std::uniform_int_distribution<int> rot(0, 3), flip(0, 1);
  const int r = rot(rng);
  const bool f = flip(rng) == 1;
  return {dihedral(pair.lr, r, f), dihedral(pair.hr, r, f)};
}

// ---------------------------------------------------------------- manifests

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  try {
    auto j = nlohmann::json::parse(is);
    m.scale = j.at("scale").get<std::int64_t>();
    m.on_the_fly_lr = false;
    for (const auto& e : j.at("entries")) {
      ManifestEntry me;
      me.hr = m.root / e.at("hr").get<std::string>();
      if (e.contains("lr") && !e.at("lr").is_null()) me.lr = m.root / e.at("lr").get<std::string>();
      if (!me.lr) m.on_the_fly_lr = true;
      m.entries.push_back(std::move(me));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad manifest " + path.string() + ": " + e.what());
  }
  if (m.scale < 1) throw DataError("manifest scale must be positive");
  if (m.entries.empty()) throw DataError("manifest " + path.string() + " has no entries");
  return m;
}

DatasetManifest manifest_from_directory(const fs::path& root, std::int64_t scale) {
  const auto hr_dir = root / "HR";
  if (!fs::is_directory(hr_dir)) throw DataError("no HR directory under " + root.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(hr_dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no PNG files in " + hr_dir.string());
  DatasetManifest m;
  m.root = root;
  m.scale = scale;
  m.on_the_fly_lr = false;
  for (const auto& f : files) {
    ManifestEntry e{f, std::nullopt};
    const auto lr = root / ("LRbicX" + std::to_string(scale)) / f.filename();
    if (fs::exists(lr))
      e.lr = lr;
    else
      m.on_the_fly_lr = true;
    m.entries.push_back(std::move(e));
  }
  return m;
}

fs::path lr_cache_path(const fs::path& hr, std::int64_t scale) {
  const auto dir = hr.parent_path();
  const auto base = dir.filename() == "HR" ? dir.parent_path() : dir;
  return base / ("LRbicX" + std::to_string(scale)) / hr.filename();
}

std::vector<LoadedImage> load_dataset(const DatasetManifest& manifest, bool write_cache) {
  std::vector<LoadedImage> out;
  for (const auto& e : manifest.entries) {
    LoadedImage li;
    li.name = e.hr.stem().string();
    li.hr = modcrop(load_png(e.hr), manifest.scale);
    if (e.lr) {
      li.lr = load_png(*e.lr);
    } else {
      const auto cache = lr_cache_path(e.hr, manifest.scale);
      if (fs::exists(cache)) {
        li.lr = load_png(cache);
      } else {
        li.lr = degrade(li.hr, manifest.scale);
        if (write_cache) save_png(cache, li.lr);
      }
    }
    if (li.lr.height * manifest.scale != li.hr.height || li.lr.width * manifest.scale != li.hr.width)
      throw DataError("LR extents of '" + li.name + "' do not match HR / scale");
    out.push_back(std::move(li));
  }
  return out;
}

// ---------------------------------------------------------------- tensors

Tensor images_to_tensor(const std::vector<ImagePlane>& images) {
  if (images.empty()) throw ShapeError("images_to_tensor: empty batch");
  const auto h = images[0].height, w = images[0].width, b = static_cast<std::int64_t>(images.size());
  std::vector<double> data(static_cast<std::size_t>(b * 3 * h * w));
  for (std::int64_t n = 0; n < b; ++n) {
    const auto& img = images[static_cast<std::size_t>(n)];
    if (img.height != h || img.width != w) throw ShapeError("images_to_tensor: mixed extents");
    for (int c = 0; c < 3; ++c)
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) data[static_cast<std::size_t>(((n * 3 + c) * h + y) * w + x)] = img.at(y, x, c);
  }
  return Tensor({b, 3, h, w}, std::move(data));
}

ImagePlane tensor_to_image(const Tensor& t, std::int64_t index) {
  if (t.rank() != 4 || t.dim(1) != 3) throw ShapeError("tensor_to_image expects (b, 3, h, w)");
  if (index < 0 || index >= t.dim(0)) throw ShapeError("tensor_to_image: batch index out of range");
  const auto h = t.dim(2), w = t.dim(3);
  auto d = t.data();
  ImagePlane img(h, w);
  for (int c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) img.at(y, x, c) = d[static_cast<std::size_t>(((index * 3 + c) * h + y) * w + x)];
  return img;
}

// ---------------------------------------------------------------- batches

std::string rng_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng rng_from_string(const std::string& s) {
  Rng rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw FormatError("bad random generator state");
  return rng;
}

BatchIterator::BatchIterator(std::shared_ptr<const std::vector<LoadedImage>> images, BatchSpec spec, Rng rng)
    : images_(std::move(images)), spec_(spec), rng_(std::move(rng)) {
  if (!images_ || images_->empty()) throw DataError("batch iterator needs at least one image");
  if (spec_.batch <= 0 || spec_.patch <= 0) throw DataError("batch and patch must be positive");
  if (spec_.prefetch > 0) thread_ = std::thread([this] { worker(); });
}

BatchIterator::~BatchIterator() {
  {
    std::lock_guard lk(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

Batch BatchIterator::draw() {
  std::vector<ImagePlane> lrs, hrs;
  std::uniform_int_distribution<std::size_t> pick(0, images_->size() - 1);
  for (std::int64_t i = 0; i < spec_.batch; ++i) {
    const auto& img = (*images_)[pick(rng_)];
    auto pair = sample_patch_pair(img.lr, img.hr, spec_.scale, spec_.patch, rng_);
    if (spec_.augment) pair = augment(pair, rng_);
    lrs.push_back(std::move(pair.lr));
    hrs.push_back(std::move(pair.hr));
  }
  return {images_to_tensor(lrs), images_to_tensor(hrs), rng_to_string(rng_)};
}

void BatchIterator::worker() {
  for (;;) {
    {
      std::unique_lock lk(mu_);
      cv_.wait(lk, [this] { return stop_ || static_cast<std::int64_t>(queue_.size()) < spec_.prefetch; });
      if (stop_) return;
    }
    try {
      auto b = draw();
      std::lock_guard lk(mu_);
      queue_.push_back(std::move(b));
    } catch (...) {
      std::lock_guard lk(mu_);
      error_ = std::current_exception();
      cv_.notify_all();
      return;
    }
    cv_.notify_all();
  }
}

Batch BatchIterator::next() {
  if (spec_.prefetch <= 0) return draw();
  std::unique_lock lk(mu_);
  cv_.wait(lk, [this] { return !queue_.empty() || error_; });
  if (queue_.empty() && error_) std::rethrow_exception(error_);
  auto b = std::move(queue_.front());
  queue_.pop_front();
  lk.unlock();
  cv_.notify_all();
  return b;
}

}  // namespace contrast
