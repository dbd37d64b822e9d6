#include "keylock/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace keylock {

namespace {

constexpr std::size_t kRecordBytes = 3073;
constexpr std::size_t kRecordsPerBatch = 10000;
constexpr std::uint32_t kSide = 32;

void load_batch(const std::filesystem::path& file, LabeledDataset& out) {
  std::error_code ec;
  const auto fsize = std::filesystem::file_size(file, ec);
  if (ec) throw std::runtime_error("dataset not found: " + file.string());
  if (fsize != kRecordBytes * kRecordsPerBatch)
    throw std::runtime_error("corrupt batch file: " + file.string());

  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("dataset not found: " + file.string());

  std::array<std::uint8_t, kRecordBytes> record;
  for (std::size_t r = 0; r < kRecordsPerBatch; ++r) {
    in.read(reinterpret_cast<char*>(record.data()), kRecordBytes);
    if (std::size_t(in.gcount()) != kRecordBytes)
      throw std::runtime_error("corrupt batch file: " + file.string());
    if (record[0] >= LabeledDataset::kClasses)
      throw std::runtime_error("corrupt batch file: " + file.string());
    out.labels.push_back(record[0]);
    ImageTensor img(3, kSide, kSide);
    for (std::size_t i = 0; i < 3072; ++i)
      img.data[i] = float(record[1 + i]) / 255.0f;
    out.images.push_back(std::move(img));
  }
}

}  // namespace

std::pair<LabeledDataset, LabeledDataset> load_cifar10(
    const std::filesystem::path& dir) {
  LabeledDataset train;
  train.split = Split::train;
  for (int b = 1; b <= 5; ++b)
    load_batch(dir / ("data_batch_" + std::to_string(b) + ".bin"), train);

  LabeledDataset test;
  test.split = Split::test;
  load_batch(dir / "test_batch.bin", test);
  return {std::move(train), std::move(test)};
}

std::array<std::uint8_t, 3073> to_record(const ImageTensor& img,
                                         std::uint8_t label) {
  if (img.size() != 3072)
    throw std::invalid_argument("record requires a 3x32x32 tensor");
  std::array<std::uint8_t, 3073> out;
  out[0] = label;
  for (std::size_t i = 0; i < 3072; ++i)
    out[1 + i] = std::uint8_t(std::nearbyint(
        std::clamp(img.data[i], 0.0f, 1.0f) * 255.0f));
  return out;
}

void augment_into(const ImageTensor& x, const AugmentConfig& cfg, Rng& rng,
                  ImageTensor& out) {
  if (!cfg.enabled) {
    out = x;
    return;
  }
  if (cfg.crop > x.height + 2 * cfg.pad || cfg.crop > x.width + 2 * cfg.pad)
    throw std::invalid_argument("crop larger than padded image");

  const std::uint32_t oy = rng.next_below(2 * cfg.pad + 1);
  const std::uint32_t ox = rng.next_below(2 * cfg.pad + 1);
  const bool flip = rng.next_unit() < cfg.hflip_prob;

  out.channels = x.channels;
  out.height = cfg.crop;
  out.width = cfg.crop;
  out.data.assign(std::size_t(x.channels) * cfg.crop * cfg.crop, 0.0f);

  // out(y,x') = padded(y+oy, x'+ox); padding contributes zeros
  for (std::uint32_t c = 0; c < x.channels; ++c) {
    for (std::uint32_t y = 0; y < cfg.crop; ++y) {
      const std::int64_t sy = std::int64_t(y) + oy - cfg.pad;
      if (sy < 0 || sy >= x.height) continue;
      for (std::uint32_t xx = 0; xx < cfg.crop; ++xx) {
        const std::int64_t sx = std::int64_t(xx) + ox - cfg.pad;
        if (sx < 0 || sx >= x.width) continue;
        const std::uint32_t dx = flip ? cfg.crop - 1 - xx : xx;
        out.at(c, y, dx) = x.at(c, std::uint32_t(sy), std::uint32_t(sx));
      }
    }
  }
}

ImageTensor augment(const ImageTensor& x, const AugmentConfig& cfg, Rng& rng) {
  ImageTensor out;
  augment_into(x, cfg, rng, out);
  return out;
}

std::vector<std::size_t> sample_indices(std::size_t population,
                                        std::size_t count,
                                        std::uint64_t seed) {
  if (count > population)
    throw std::invalid_argument("subset larger than dataset");
  std::vector<std::size_t> pool(population);
  for (std::size_t i = 0; i < population; ++i) pool[i] = i;
  Rng rng(seed);
  // partial Fisher-Yates: first `count` entries are a uniform sample
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j =
        i + rng.next_below(std::uint32_t(population - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

LabeledDataset sample_subset(const LabeledDataset& d, std::size_t count,
                             std::uint64_t seed) {
  const auto idx = sample_indices(d.size(), count, seed);
  LabeledDataset out;
  out.split = d.split;
  out.images.reserve(count);
  out.labels.reserve(count);
  for (std::size_t i : idx) {
    out.images.push_back(d.images[i]);
    out.labels.push_back(d.labels[i]);
  }
  return out;
}

std::array<std::size_t, LabeledDataset::kClasses> label_histogram(
    const LabeledDataset& d) {
  std::array<std::size_t, LabeledDataset::kClasses> hist{};
  for (std::uint8_t l : d.labels) ++hist[l];
  return hist;
}

void write_index_manifest(std::span<const std::size_t> indices,
                          const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t i : indices) out << i << '\n';
}

}  // namespace keylock
