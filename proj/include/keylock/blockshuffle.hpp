#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "keylock/keycore.hpp"
#include "keylock/tensor.hpp"

namespace keylock {

// Block size M plus channel count c; the in-block vector has length c*M*M.
struct ShuffleConfig {
  std::uint32_t block = 4;     // M, in pixels
  std::uint32_t channels = 3;  // c

  std::uint32_t vector_length() const { return channels * block * block; }
};

// Flattening order of a block tensor into its vector: channel-major, then
// row-major. This is part of the transform contract.
//   k = ch*M*M + row*M + col
std::uint32_t block_vector_index(const ShuffleConfig& cfg, std::uint32_t ch,
                                 std::uint32_t row, std::uint32_t col);

// Precomputed gather map for one (image shape, permutation) pair. Applying a
// plan moves every pixel in one pass; reuse it across images of the same
// shape to keep per-image cost at a plain gather copy.
class ShufflePlan {
 public:
  ShufflePlan(const ShuffleConfig& cfg, const Permutation& p,
              std::uint32_t height, std::uint32_t width);

  void apply(const ImageTensor& in, ImageTensor& out) const;
  ImageTensor apply(const ImageTensor& in) const;

  // Full-image gather map: out.data[i] = in.data[source_index(i)].
  const std::vector<std::uint32_t>& flat_map() const { return flat_; }

  std::uint32_t height() const { return height_; }
  std::uint32_t width() const { return width_; }
  std::uint32_t channels() const { return channels_; }

 private:
  std::uint32_t channels_, height_, width_, block_;
  // per-k offsets relative to a block's top-left spatial origin
  std::vector<std::uint32_t> dst_rel_, src_rel_;
  std::vector<std::uint32_t> flat_;
};

// Applies the keyed block-wise pixel shuffle: the image is divided into
// M x M blocks spanning all channels, each block is flattened with
// block_vector_index, and out_vec[k] = in_vec[p[k]] for every block with the
// same permutation. Values move, never change.
ImageTensor shuffle_image(const ImageTensor& x, const ShuffleConfig& cfg,
                          const Permutation& p);

// Exact inverse: unshuffle_image(shuffle_image(x, cfg, p), cfg, p) == x.
ImageTensor unshuffle_image(const ImageTensor& x, const ShuffleConfig& cfg,
                            const Permutation& p);

// Per-image application over a batch; output order equals input order.
// All images must share one shape.
std::vector<ImageTensor> shuffle_batch(std::span<const ImageTensor> batch,
                                       const ShuffleConfig& cfg,
                                       const Permutation& p);

}  // namespace keylock
