#include "keylock/ppm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace keylock {

void write_ppm(const std::filesystem::path& path, const ImageTensor& img) {
  if (img.channels != 3)
    throw std::invalid_argument("PPM export requires a 3-channel tensor");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<std::uint8_t> row(std::size_t(img.width) * 3);
  for (std::uint32_t y = 0; y < img.height; ++y) {
    for (std::uint32_t x = 0; x < img.width; ++x) {
      for (std::uint32_t c = 0; c < 3; ++c) {
        const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
        // nearbyint under the default rounding mode = half to even
        row[3 * std::size_t(x) + c] =
            std::uint8_t(std::nearbyint(v * 255.0f));
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              std::streamsize(row.size()));
  }
  if (!out) throw std::runtime_error("short write: " + path.string());
}

namespace {

// Skips whitespace and '#' comments between header tokens.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (!std::isspace(c)) {
      tok.push_back(char(c));
      break;
    }
  }
  while ((c = in.get()) != EOF && !std::isspace(c)) tok.push_back(char(c));
  return tok;
}

}  // namespace

ImageTensor read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  if (next_token(in) != "P6")
    throw std::runtime_error("not a P6 PPM file: " + path.string());
  const std::uint32_t width = std::uint32_t(std::stoul(next_token(in)));
  const std::uint32_t height = std::uint32_t(std::stoul(next_token(in)));
  const std::uint32_t maxval = std::uint32_t(std::stoul(next_token(in)));
  if (maxval != 255)
    throw std::runtime_error("unsupported maxval in " + path.string());

  std::vector<std::uint8_t> raw(std::size_t(width) * height * 3);
  in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (std::size_t(in.gcount()) != raw.size())
    throw std::runtime_error("truncated PPM: " + path.string());

  ImageTensor img(3, height, width);
  std::size_t i = 0;
  for (std::uint32_t y = 0; y < height; ++y)
    for (std::uint32_t x = 0; x < width; ++x)
      for (std::uint32_t c = 0; c < 3; ++c)
        img.at(c, y, x) = float(raw[i++]) / 255.0f;
  return img;
}

}  // namespace keylock
