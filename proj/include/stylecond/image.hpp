#pragma once

#include <cstddef>
#include <vector>

namespace stylecond {

/// Planar C x H x W float tensor. Model images, article images, article
/// stacks and heatmaps all use this layout (channel-major, row-major).
struct ImageTensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  ImageTensor() = default;
  ImageTensor(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height + y) * width + x;
  }
  float& at(int c, int y, int x) { return data[index(c, y, x)]; }
  float at(int c, int y, int x) const { return data[index(c, y, x)]; }

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  bool same_shape(const ImageTensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

/// 2x2 box-filter downsample (height and width must be even).
ImageTensor downsample2x(const ImageTensor& image);

}  // namespace stylecond
