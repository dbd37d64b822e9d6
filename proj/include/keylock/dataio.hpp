#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "keylock/rng.hpp"
#include "keylock/tensor.hpp"

namespace keylock {

enum class Split { train, test };

struct LabeledDataset {
  static constexpr std::uint32_t kClasses = 10;

  std::vector<ImageTensor> images;
  std::vector<std::uint8_t> labels;
  Split split = Split::train;

  std::size_t size() const { return images.size(); }
};

// Loads the six standard CIFAR-10 binary batch files (data_batch_1..5.bin,
// test_batch.bin; 10000 records of 3073 bytes each: label byte followed by
// 3072 channel-major pixel bytes). Pixels are scaled to [0,1] by /255.
// Throws "dataset not found" / "corrupt batch file" with the offending path.
std::pair<LabeledDataset, LabeledDataset> load_cifar10(
    const std::filesystem::path& dir);

// Inverse of the loader for one record; used for byte-level audits.
std::array<std::uint8_t, 3073> to_record(const ImageTensor& img,
                                         std::uint8_t label);

struct AugmentConfig {
  std::uint32_t pad = 4;
  std::uint32_t crop = 32;
  float hflip_prob = 0.5f;
  bool enabled = true;
};

// Zero-pads by cfg.pad on all sides, crops a crop x crop window at offsets
// uniform in {0,...,2*pad}, then mirrors horizontally with probability
// hflip_prob. Draw order is fixed: row offset, column offset, flip.
ImageTensor augment(const ImageTensor& x, const AugmentConfig& cfg, Rng& rng);
void augment_into(const ImageTensor& x, const AugmentConfig& cfg, Rng& rng,
                  ImageTensor& out);

// Uniform sample of `count` distinct indices from {0,...,population-1};
// deterministic for a fixed seed.
std::vector<std::size_t> sample_indices(std::size_t population,
                                        std::size_t count, std::uint64_t seed);

// Uniform subset without replacement, labels kept aligned.
LabeledDataset sample_subset(const LabeledDataset& d, std::size_t count,
                             std::uint64_t seed);

std::array<std::size_t, LabeledDataset::kClasses> label_histogram(
    const LabeledDataset& d);

// Newline-separated decimal indices, for subset audits.
void write_index_manifest(std::span<const std::size_t> indices,
                          const std::filesystem::path& path);

}  // namespace keylock
