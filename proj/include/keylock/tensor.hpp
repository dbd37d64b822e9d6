#pragma once

#include <cstdint>
#include <vector>

namespace keylock {

// Pixel tensor with values in [0,1], stored channel-major then row-major:
// data[(c * height + y) * width + x].
struct ImageTensor {
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> data;

  ImageTensor() = default;
  ImageTensor(std::uint32_t c, std::uint32_t h, std::uint32_t w)
      : channels(c), height(h), width(w),
        data(std::size_t(c) * h * w, 0.0f) {}

  float& at(std::uint32_t c, std::uint32_t y, std::uint32_t x) {
    return data[(std::size_t(c) * height + y) * width + x];
  }
  float at(std::uint32_t c, std::uint32_t y, std::uint32_t x) const {
    return data[(std::size_t(c) * height + y) * width + x];
  }

  std::size_t size() const { return data.size(); }

  bool same_shape(const ImageTensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  bool operator==(const ImageTensor&) const = default;
};

}  // namespace keylock
