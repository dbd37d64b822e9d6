#pragma once

// Independent reference implementations used as test oracles. These must stay
// naive and separate from the library's optimized paths.

#include <cstdint>
#include <vector>

#include "keylock/nettrain.hpp"
#include "keylock/rng.hpp"
#include "keylock/tensor.hpp"

namespace keylock::testing {

// Block-wise shuffle done the slow way: divide into blocks, flatten each
// block channel-major/row-major, permute out[k] = in[map[k]], reassemble.
inline ImageTensor naive_shuffle(const ImageTensor& x, std::uint32_t m,
                                 const std::vector<std::uint32_t>& map) {
  ImageTensor out(x.channels, x.height, x.width);
  const std::uint32_t n = x.channels * m * m;
  std::vector<float> vec(n), shuffled(n);
  for (std::uint32_t by = 0; by < x.height; by += m) {
    for (std::uint32_t bx = 0; bx < x.width; bx += m) {
      for (std::uint32_t c = 0; c < x.channels; ++c)
        for (std::uint32_t r = 0; r < m; ++r)
          for (std::uint32_t col = 0; col < m; ++col)
            vec[c * m * m + r * m + col] = x.at(c, by + r, bx + col);
      for (std::uint32_t k = 0; k < n; ++k) shuffled[k] = vec[map[k]];
      for (std::uint32_t c = 0; c < x.channels; ++c)
        for (std::uint32_t r = 0; r < m; ++r)
          for (std::uint32_t col = 0; col < m; ++col)
            out.at(c, by + r, bx + col) = shuffled[c * m * m + r * m + col];
    }
  }
  return out;
}

// Straightforward per-image forward pass in double, walking the flat
// parameter vector in its documented layout. Channel-major activations,
// plain loops, no batching, no im2col.
inline std::vector<double> naive_forward(const Model& model,
                                         const ImageTensor& img) {
  struct Vol {
    std::uint32_t c, h, w;
    std::vector<double> v;
    double& at(std::uint32_t ch, std::uint32_t y, std::uint32_t x) {
      return v[(std::size_t(ch) * h + y) * w + x];
    }
    double get(std::uint32_t ch, std::uint32_t y, std::uint32_t x) const {
      return v[(std::size_t(ch) * h + y) * w + x];
    }
  };

  Vol cur{img.channels, img.height, img.width,
          std::vector<double>(img.data.begin(), img.data.end())};
  const float* p = model.params.data();

  for (const LayerSpec& spec : model.arch.layers) {
    if (const auto* conv = std::get_if<ConvSpec>(&spec)) {
      const std::uint32_t k = conv->kernel;
      const std::uint32_t oh = cur.h + 2 * conv->pad - k + 1;
      const std::uint32_t ow = cur.w + 2 * conv->pad - k + 1;
      const float* weights = p;
      const float* bias = p + std::size_t(conv->out_channels) *
                                  conv->in_channels * k * k;
      Vol next{conv->out_channels, oh, ow,
               std::vector<double>(std::size_t(conv->out_channels) * oh * ow)};
      for (std::uint32_t oc = 0; oc < conv->out_channels; ++oc) {
        for (std::uint32_t y = 0; y < oh; ++y) {
          for (std::uint32_t x = 0; x < ow; ++x) {
            double acc = bias[oc];
            for (std::uint32_t dy = 0; dy < k; ++dy) {
              for (std::uint32_t dx = 0; dx < k; ++dx) {
                const std::int64_t sy = std::int64_t(y) + dy - conv->pad;
                const std::int64_t sx = std::int64_t(x) + dx - conv->pad;
                if (sy < 0 || sy >= cur.h || sx < 0 || sx >= cur.w) continue;
                for (std::uint32_t ci = 0; ci < conv->in_channels; ++ci) {
                  const double wv =
                      weights[(std::size_t(oc) * conv->in_channels * k * k) +
                              (std::size_t(dy) * k + dx) * conv->in_channels +
                              ci];
                  acc += wv * cur.get(ci, std::uint32_t(sy), std::uint32_t(sx));
                }
              }
            }
            next.at(oc, y, x) = acc;
          }
        }
      }
      p = bias + conv->out_channels;
      cur = std::move(next);
    } else if (std::holds_alternative<ReluSpec>(spec)) {
      for (double& v : cur.v) v = v > 0.0 ? v : 0.0;
    } else if (const auto* pool = std::get_if<MaxPoolSpec>(&spec)) {
      const std::uint32_t v = pool->window;
      Vol next{cur.c, cur.h / v, cur.w / v,
               std::vector<double>(std::size_t(cur.c) * (cur.h / v) *
                                   (cur.w / v))};
      for (std::uint32_t c = 0; c < cur.c; ++c)
        for (std::uint32_t y = 0; y < next.h; ++y)
          for (std::uint32_t x = 0; x < next.w; ++x) {
            double best = cur.get(c, y * v, x * v);
            for (std::uint32_t dy = 0; dy < v; ++dy)
              for (std::uint32_t dx = 0; dx < v; ++dx)
                best = std::max(best, cur.get(c, y * v + dy, x * v + dx));
            next.at(c, y, x) = best;
          }
      cur = std::move(next);
    } else {
      const auto& dense = std::get<DenseSpec>(spec);
      const float* weights = p;
      const float* bias = p + std::size_t(dense.outputs) * dense.inputs;
      // flattened input index order: (y, x, channel)
      std::vector<double> flat(dense.inputs);
      std::size_t i = 0;
      for (std::uint32_t y = 0; y < cur.h; ++y)
        for (std::uint32_t x = 0; x < cur.w; ++x)
          for (std::uint32_t c = 0; c < cur.c; ++c) flat[i++] = cur.get(c, y, x);
      Vol next{dense.outputs, 1, 1, std::vector<double>(dense.outputs)};
      for (std::uint32_t o = 0; o < dense.outputs; ++o) {
        double acc = bias[o];
        for (std::uint32_t j = 0; j < dense.inputs; ++j)
          acc += double(weights[std::size_t(o) * dense.inputs + j]) * flat[j];
        next.v[o] = acc;
      }
      p = bias + dense.outputs;
      cur = std::move(next);
    }
  }
  return cur.v;
}

inline ImageTensor random_image(Rng& rng, std::uint32_t c, std::uint32_t h,
                                std::uint32_t w) {
  ImageTensor img(c, h, w);
  for (float& v : img.data) v = rng.next_unit();
  return img;
}

// Image whose bytes survive the [0,1] quantization round trip.
inline ImageTensor random_quantized_image(Rng& rng, std::uint32_t c,
                                          std::uint32_t h, std::uint32_t w) {
  ImageTensor img(c, h, w);
  for (float& v : img.data) v = float(rng.next_below(256)) / 255.0f;
  return img;
}

}  // namespace keylock::testing
