#include "keylock/blockshuffle.hpp"

#include <stdexcept>

#include "keylock/parallel.hpp"

namespace keylock {

std::uint32_t block_vector_index(const ShuffleConfig& cfg, std::uint32_t ch,
                                 std::uint32_t row, std::uint32_t col) {
  if (ch >= cfg.channels || row >= cfg.block || col >= cfg.block)
    throw std::out_of_range("block coordinate out of range");
  return ch * cfg.block * cfg.block + row * cfg.block + col;
}

namespace {

void check_applicable(const ShuffleConfig& cfg, const Permutation& p,
                      std::uint32_t channels, std::uint32_t height,
                      std::uint32_t width) {
  if (channels != cfg.channels)
    throw std::invalid_argument("channel count mismatch");
  if (height % cfg.block != 0 || width % cfg.block != 0)
    throw std::invalid_argument("block size does not divide image");
  if (p.size() != cfg.vector_length())
    throw std::invalid_argument("permutation length mismatch");
}

}  // namespace

ShufflePlan::ShufflePlan(const ShuffleConfig& cfg, const Permutation& p,
                         std::uint32_t height, std::uint32_t width)
    : channels_(cfg.channels), height_(height), width_(width),
      block_(cfg.block) {
  check_applicable(cfg, p, cfg.channels, height, width);

  const std::uint32_t m = block_;
  const std::uint32_t n = cfg.vector_length();
  dst_rel_.resize(n);
  src_rel_.resize(n);
  const std::uint32_t plane = height_ * width_;
  auto unflatten_rel = [&](std::uint32_t k) {
    const std::uint32_t ch = k / (m * m);
    const std::uint32_t row = (k / m) % m;
    const std::uint32_t col = k % m;
    return ch * plane + row * width_ + col;
  };
  for (std::uint32_t k = 0; k < n; ++k) {
    dst_rel_[k] = unflatten_rel(k);
    src_rel_[k] = unflatten_rel(p[k]);
  }

  flat_.resize(std::size_t(channels_) * plane);
  for (std::uint32_t by = 0; by < height_; by += m) {
    for (std::uint32_t bx = 0; bx < width_; bx += m) {
      const std::uint32_t base = by * width_ + bx;
      for (std::uint32_t k = 0; k < n; ++k)
        flat_[base + dst_rel_[k]] = base + src_rel_[k];
    }
  }
}

void ShufflePlan::apply(const ImageTensor& in, ImageTensor& out) const {
  if (in.channels != channels_ || in.height != height_ || in.width != width_)
    throw std::invalid_argument("image shape does not match plan");
  out.channels = channels_;
  out.height = height_;
  out.width = width_;
  out.data.resize(in.data.size());
  const float* src = in.data.data();
  float* dst = out.data.data();
  const std::uint32_t* map = flat_.data();
  const std::size_t total = flat_.size();
  for (std::size_t i = 0; i < total; ++i) dst[i] = src[map[i]];
}

ImageTensor ShufflePlan::apply(const ImageTensor& in) const {
  ImageTensor out;
  apply(in, out);
  return out;
}

ImageTensor shuffle_image(const ImageTensor& x, const ShuffleConfig& cfg,
                          const Permutation& p) {
  check_applicable(cfg, p, x.channels, x.height, x.width);
  return ShufflePlan(cfg, p, x.height, x.width).apply(x);
}

ImageTensor unshuffle_image(const ImageTensor& x, const ShuffleConfig& cfg,
                            const Permutation& p) {
  check_applicable(cfg, p, x.channels, x.height, x.width);
  return ShufflePlan(cfg, p.inverted(), x.height, x.width).apply(x);
}

std::vector<ImageTensor> shuffle_batch(std::span<const ImageTensor> batch,
                                       const ShuffleConfig& cfg,
                                       const Permutation& p) {
  std::vector<ImageTensor> out(batch.size());
  if (batch.empty()) return out;
  for (const ImageTensor& img : batch)
    if (!img.same_shape(batch.front()))
      throw std::invalid_argument("heterogeneous shapes in batch");
  const ShufflePlan plan(cfg, p, batch.front().height, batch.front().width);
  parallel_chunks(batch.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) plan.apply(batch[i], out[i]);
  });
  return out;
}

}  // namespace keylock
