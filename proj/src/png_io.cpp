#include "stylecond/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "stylecond/errors.hpp"

namespace stylecond {

namespace {

void on_write(png_structp png, png_bytep data, png_size_t size) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + size);
}

void on_flush(png_structp) {}

struct ReadCursor {
  const std::vector<std::uint8_t>* bytes;
  std::size_t pos;
};

void on_read(png_structp png, png_bytep data, png_size_t size) {
  auto* c = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (c->pos + size > c->bytes->size()) png_error(png, "truncated PNG");
  std::memcpy(data, c->bytes->data() + c->pos, size);
  c->pos += size;
}

[[noreturn]] void on_error(png_structp, png_const_charp msg) { throw FormatError(std::string("png: ") + msg); }

void on_warning(png_structp, png_const_charp) {}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

std::vector<std::uint8_t> encode_png(const ImageTensor& image) {
  if (image.channels != 3) throw ValidationError("image", "PNG export needs 3 channels");
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, on_error, on_warning);
  if (!png) throw std::runtime_error("png: cannot create writer");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(image.width) * 3);
  try {
    png_set_write_fn(png, &out, on_write, on_flush);
    png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x)
        for (int c = 0; c < 3; ++c) row[static_cast<std::size_t>(x) * 3 + c] = to_byte(image.at(c, y, x));
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

ImageTensor decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw FormatError("png: bad signature");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, on_error, on_warning);
  if (!png) throw std::runtime_error("png: cannot create reader");
  png_infop info = png_create_info_struct(png);
  ReadCursor cursor{&bytes, 0};
  ImageTensor img;
  try {
    png_set_read_fn(png, &cursor, on_read);
    png_read_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int type = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) != 8 || (type != PNG_COLOR_TYPE_RGB && type != PNG_COLOR_TYPE_RGBA)) {
      throw FormatError("png: only 8-bit RGB/RGBA is supported");
    }
    const int stride = type == PNG_COLOR_TYPE_RGBA ? 4 : 3;
    img = ImageTensor(3, h, w);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * stride);
    for (int y = 0; y < h; ++y) {
      png_read_row(png, row.data(), nullptr);
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = row[static_cast<std::size_t>(x) * stride + c] / 255.0f;
    }
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

ImageTensor tile_images(const std::vector<ImageTensor>& images, int columns, int gap) {
  if (images.empty()) throw ValidationError("images", "nothing to tile");
  if (columns < 1 || gap < 0) throw ValidationError("columns", "must be positive");
  const int h = images[0].height, w = images[0].width;
  for (const auto& im : images) {
    if (im.channels != 3 || im.height != h || im.width != w) throw ValidationError("images", "sizes differ");
  }
  const int n = static_cast<int>(images.size());
  const int cols = std::min(columns, n), rows = (n + cols - 1) / cols;
  ImageTensor out(3, rows * h + (rows - 1) * gap, cols * w + (cols - 1) * gap);
  std::fill(out.data.begin(), out.data.end(), 1.0f);
  for (int k = 0; k < n; ++k) {
    const int oy = (k / cols) * (h + gap), ox = (k % cols) * (w + gap);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(c, oy + y, ox + x) = images[k].at(c, y, x);
  }
  return out;
}

void write_png(const ImageTensor& image, const std::filesystem::path& path) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace stylecond
