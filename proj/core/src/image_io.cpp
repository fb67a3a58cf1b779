#include "fusionsam/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <memory>

#include "fusionsam/error.hpp"

namespace fusionsam {

namespace {

struct ImageGuard {
  png_image img{};
  ImageGuard() { img.version = PNG_IMAGE_VERSION; }
  ~ImageGuard() { png_image_free(&img); }
};

std::string what(const std::filesystem::path& path, const png_image& img) {
  return "png " + path.string() + ": " + img.message;
}

void begin(ImageGuard& g, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("png " + path.string() + ": no such file");
  if (png_image_begin_read_from_file(&g.img, path.c_str()) == 0) throw DataError(what(path, g.img));
}

Image8 read_as(const std::filesystem::path& path, png_uint_32 format, std::size_t channels) {
  ImageGuard g;
  begin(g, path);
  g.img.format = format;
  Image8 out;
  out.height = g.img.height;
  out.width = g.img.width;
  out.channels = channels;
  out.pixels.resize(PNG_IMAGE_SIZE(g.img));
  if (png_image_finish_read(&g.img, nullptr, out.pixels.data(), 0, nullptr) == 0) throw DataError(what(path, g.img));
  return out;
}

}  // namespace

Image8 read_png_rgb(const std::filesystem::path& path) { return read_as(path, PNG_FORMAT_RGB, 3); }

Image8 read_png_gray(const std::filesystem::path& path) { return read_as(path, PNG_FORMAT_GRAY, 1); }

LabelGrid read_png_indexed(const std::filesystem::path& path) {
  ImageGuard g;
  begin(g, path);
  std::vector<std::uint8_t> raw;
  if ((g.img.format & PNG_FORMAT_FLAG_COLORMAP) != 0) {
    g.img.format = PNG_FORMAT_RGB_COLORMAP;
    raw.resize(PNG_IMAGE_SIZE(g.img));
    std::vector<std::uint8_t> cmap(PNG_IMAGE_COLORMAP_SIZE(g.img));
    if (png_image_finish_read(&g.img, nullptr, raw.data(), 0, cmap.data()) == 0) throw DataError(what(path, g.img));
  } else if ((g.img.format & PNG_FORMAT_FLAG_COLOR) == 0) {
    g.img.format = PNG_FORMAT_GRAY;
    raw.resize(PNG_IMAGE_SIZE(g.img));
    if (png_image_finish_read(&g.img, nullptr, raw.data(), 0, nullptr) == 0) throw DataError(what(path, g.img));
  } else {
    throw DataError("png " + path.string() + ": label image must be palette or grayscale, not RGB");
  }
  LabelGrid grid(g.img.height, g.img.width);
  std::copy(raw.begin(), raw.end(), grid.ids.begin());
  return grid;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) throw DataError("write_png: channels must be 1 or 3");
  if (image.pixels.size() != image.height * image.width * image.channels) {
    throw DataError("write_png: pixel buffer size mismatch");
  }
  ImageGuard g;
  g.img.width = static_cast<png_uint_32>(image.width);
  g.img.height = static_cast<png_uint_32>(image.height);
  g.img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (png_image_write_to_file(&g.img, path.c_str(), 0, image.pixels.data(), 0, nullptr) == 0) {
    throw DataError(what(path, g.img));
  }
}

void write_png_indexed(const std::filesystem::path& path, const LabelGrid& ids, std::span<const Rgb> palette) {
  if (palette.empty() || palette.size() > 256) throw DataError("write_png_indexed: palette must hold 1..256 entries");
  std::vector<std::uint8_t> raw(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids.ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= palette.size()) {
      throw DataError("class id " + std::to_string(id) + " outside palette of " + std::to_string(palette.size()) +
                      " entries");
    }
    raw[i] = static_cast<std::uint8_t>(id);
  }
  std::vector<std::uint8_t> cmap;
  for (const Rgb& c : palette) cmap.insert(cmap.end(), c.begin(), c.end());
  ImageGuard g;
  g.img.width = static_cast<png_uint_32>(ids.width);
  g.img.height = static_cast<png_uint_32>(ids.height);
  g.img.format = PNG_FORMAT_RGB_COLORMAP;
  g.img.colormap_entries = static_cast<png_uint_32>(palette.size());
  if (png_image_write_to_file(&g.img, path.c_str(), 0, raw.data(), 0, cmap.data()) == 0) {
    throw DataError(what(path, g.img));
  }
}

Tensor image_to_tensor(const Image8& image) {
  std::vector<Scalar> v(image.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<Scalar>(image.pixels[i]) / Scalar(255);
  return Tensor::from({image.height, image.width, image.channels}, std::move(v));
}

Image8 tensor_to_image(const Tensor& hwc) {
  if (hwc.rank() != 3 || (hwc.dim(2) != 1 && hwc.dim(2) != 3)) {
    throw DimensionError("tensor_to_image: expected H x W x {1,3}, got " + shape_str(hwc.shape()));
  }
  Image8 out{hwc.dim(0), hwc.dim(1), hwc.dim(2), {}};
  out.pixels.reserve(hwc.numel());
  for (Scalar x : hwc.data()) {
    const double c = std::isfinite(static_cast<double>(x)) ? std::clamp(static_cast<double>(x), 0.0, 1.0) : 0.0;
    out.pixels.push_back(static_cast<std::uint8_t>(std::lround(c * 255.0)));
  }
  return out;
}

}  // namespace fusionsam
