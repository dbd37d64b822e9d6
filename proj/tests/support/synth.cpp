#include "synth.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "keylock/rng.hpp"

namespace keylock::testing {

namespace {

constexpr std::uint32_t kClasses = 10;
constexpr std::uint32_t kSide = 32;

using Tile = std::vector<std::uint8_t>;  // [c][y][x], tile side kSide/8 etc.

// one shared multiset of 3*tile*tile byte values; every class/prototype tile
// is a different arrangement of the same values
std::vector<Tile> build_tiles(const SynthSpec& spec) {
  const std::uint32_t n = 3 * spec.tile * spec.tile;
  Tile base(n);
  for (std::uint32_t i = 0; i < n; ++i)
    base[i] = std::uint8_t(20 + (215 * i) / (n - 1));

  std::vector<Tile> tiles(kClasses * spec.prototypes);
  for (std::uint32_t cls = 0; cls < kClasses; ++cls) {
    for (std::uint32_t proto = 0; proto < spec.prototypes; ++proto) {
      Tile t = base;
      Rng rng(split_seed(spec.seed, 1000 + cls * spec.prototypes + proto));
      for (std::uint32_t i = n - 1; i > 0; --i)
        std::swap(t[i], t[rng.next_below(i + 1)]);
      tiles[cls * spec.prototypes + proto] = std::move(t);
    }
  }
  return tiles;
}

std::array<std::uint8_t, 3072> make_pixels(const SynthSpec& spec,
                                           const std::vector<Tile>& tiles,
                                           std::uint32_t label, Rng& rng) {
  const std::uint32_t t = spec.tile;
  const Tile& tile =
      tiles[label * spec.prototypes + rng.next_below(spec.prototypes)];
  const std::uint32_t py = rng.next_below(t);
  const std::uint32_t px = rng.next_below(t);
  const float scale =
      spec.brightness_min + (1.0f - spec.brightness_min) * rng.next_unit();

  std::array<std::uint8_t, 3072> out;
  std::size_t i = 0;
  for (std::uint32_t c = 0; c < 3; ++c) {
    for (std::uint32_t y = 0; y < kSide; ++y) {
      for (std::uint32_t x = 0; x < kSide; ++x) {
        const std::uint8_t base =
            tile[(c * t + (y + py) % t) * t + (x + px) % t];
        int v = int(scale * float(base) + 0.5f);
        v += int(rng.next_below(2 * spec.noise_bytes + 1)) -
             int(spec.noise_bytes);
        out[i++] = std::uint8_t(std::clamp(v, 0, 255));
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> balanced_labels(std::size_t count,
                                          std::uint64_t order_seed) {
  std::vector<std::uint8_t> labels(count);
  for (std::size_t i = 0; i < count; ++i)
    labels[i] = std::uint8_t(i % kClasses);
  Rng rng(order_seed);
  for (std::size_t i = count - 1; i > 0; --i) {
    const std::size_t j = rng.next_below(std::uint32_t(i + 1));
    std::swap(labels[i], labels[j]);
  }
  return labels;
}

}  // namespace

LabeledDataset make_synth_split(const SynthSpec& spec, std::size_t count,
                                Split split) {
  const auto tiles = build_tiles(spec);
  const std::uint64_t domain = split == Split::train ? 0 : (1ull << 40);
  const auto labels = balanced_labels(count, split_seed(spec.seed, domain + 7));

  LabeledDataset out;
  out.split = split;
  out.images.reserve(count);
  out.labels = labels;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(split_seed(spec.seed, domain + 100 + i));
    const auto pixels = make_pixels(spec, tiles, labels[i], rng);
    ImageTensor img(3, kSide, kSide);
    for (std::size_t j = 0; j < pixels.size(); ++j)
      img.data[j] = float(pixels[j]) / 255.0f;
    out.images.push_back(std::move(img));
  }
  return out;
}

void write_synth_archive(const std::filesystem::path& dir,
                         const SynthSpec& spec) {
  std::filesystem::create_directories(dir);
  const auto tiles = build_tiles(spec);

  auto write_batch = [&](const std::filesystem::path& file,
                         const std::vector<std::uint8_t>& labels,
                         std::size_t offset, std::size_t count,
                         std::uint64_t domain) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t idx = offset + i;
      Rng rng(split_seed(spec.seed, domain + 100 + idx));
      const auto pixels = make_pixels(spec, tiles, labels[idx], rng);
      out.put(char(labels[idx]));
      out.write(reinterpret_cast<const char*>(pixels.data()),
                std::streamsize(pixels.size()));
    }
    if (!out) throw std::runtime_error("short write: " + file.string());
  };

  const auto train_labels = balanced_labels(50000, split_seed(spec.seed, 7));
  for (int b = 0; b < 5; ++b)
    write_batch(dir / ("data_batch_" + std::to_string(b + 1) + ".bin"),
                train_labels, std::size_t(b) * 10000, 10000, 0);
  const std::uint64_t test_domain = 1ull << 40;
  const auto test_labels =
      balanced_labels(10000, split_seed(spec.seed, test_domain + 7));
  write_batch(dir / "test_batch.bin", test_labels, 0, 10000, test_domain);
}

std::filesystem::path shared_synth_archive() {
  const auto dir =
      std::filesystem::temp_directory_path() / "keylock-synth-cifar-v1";
  const auto marker = dir / ".complete";
  if (!std::filesystem::exists(marker)) {
    write_synth_archive(dir, SynthSpec{});
    std::ofstream(marker).put('\n');
  }
  return dir;
}

std::filesystem::path experiment_data_dir(bool& real) {
  if (const char* env = std::getenv("KEYLOCK_CIFAR_DIR")) {
    real = true;
    return env;
  }
  real = false;
  return shared_synth_archive();
}

}  // namespace keylock::testing
