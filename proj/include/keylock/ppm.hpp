#pragma once

#include <filesystem>

#include "keylock/tensor.hpp"

namespace keylock {

// 8-bit binary PPM (P6) export. Values are mapped from [0,1] to 0-255 with
// round-half-to-even. Requires a 3-channel tensor.
void write_ppm(const std::filesystem::path& path, const ImageTensor& img);

// Reads a P6 file with maxval 255; pixel bytes are scaled to [0,1] by /255.
ImageTensor read_ppm(const std::filesystem::path& path);

}  // namespace keylock
