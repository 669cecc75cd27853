#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "stylecond/image.hpp"

namespace stylecond {

/// 8-bit RGB PNG of a 3-channel image in [0, 1] (values clamped, rounded to
/// nearest). Output bytes depend only on the pixels.
std::vector<std::uint8_t> encode_png(const ImageTensor& image);

/// Decodes an 8-bit RGB or RGBA PNG into a 3-channel image in [0, 1].
ImageTensor decode_png(const std::vector<std::uint8_t>& bytes);

/// Images side by side in rows of `columns`, separated by `gap` pixels of
/// white. All images must share one size.
ImageTensor tile_images(const std::vector<ImageTensor>& images, int columns, int gap = 2);

void write_png(const ImageTensor& image, const std::filesystem::path& path);

}  // namespace stylecond
