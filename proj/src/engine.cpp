#include "keylock/engine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "keylock/parallel.hpp"

namespace keylock {

namespace {

template <class T>
inline void axpy(T a, const T* __restrict x, T* __restrict y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

struct Shape {
  std::uint32_t h, w, c;
  std::size_t size() const { return std::size_t(h) * w * c; }
};

Shape output_shape(const LayerSpec& spec, const Shape& in) {
  if (const auto* conv = std::get_if<ConvSpec>(&spec)) {
    if (conv->in_channels != in.c)
      throw std::invalid_argument("conv input channels mismatch");
    const std::int64_t side_h =
        std::int64_t(in.h) + 2 * conv->pad - conv->kernel + 1;
    const std::int64_t side_w =
        std::int64_t(in.w) + 2 * conv->pad - conv->kernel + 1;
    if (side_h < 1 || side_w < 1)
      throw std::invalid_argument("conv kernel larger than padded input");
    return {std::uint32_t(side_h), std::uint32_t(side_w), conv->out_channels};
  }
  if (std::holds_alternative<ReluSpec>(spec)) return in;
  if (const auto* pool = std::get_if<MaxPoolSpec>(&spec)) {
    if (pool->window == 0 || in.h % pool->window || in.w % pool->window)
      throw std::invalid_argument("pool window does not divide input");
    return {in.h / pool->window, in.w / pool->window, in.c};
  }
  const auto& dense = std::get<DenseSpec>(spec);
  if (dense.inputs != in.size())
    throw std::invalid_argument("dense fan-in does not match flattened input");
  return {1, 1, dense.outputs};
}

std::size_t layer_param_count(const LayerSpec& spec) {
  if (const auto* conv = std::get_if<ConvSpec>(&spec))
    return std::size_t(conv->out_channels) * conv->in_channels * conv->kernel *
               conv->kernel +
           conv->out_channels;
  if (const auto* dense = std::get_if<DenseSpec>(&spec))
    return std::size_t(dense->outputs) * dense->inputs + dense->outputs;
  return 0;
}

}  // namespace

template <class T>
struct Engine<T>::Stage {
  LayerSpec spec;
  Shape in, out;
  std::size_t param_offset = 0;

  // packed parameters; conv: w [OC][K], wt [K][OC]; dense: w [O][I], wt [I][O]
  std::vector<T> w, wt, bias;

  // per-batch buffers
  std::vector<T> act;                // [B][out.size()]
  std::vector<T> dact;               // grad of act
  std::vector<T> col;                // conv: [B][P][K]
  std::vector<std::uint32_t> argmax; // pool: [B][out.size()]
  std::vector<T> xt, dwt;            // dense/conv backward scratch

  std::uint32_t gemm_k() const {
    const auto& conv = std::get<ConvSpec>(spec);
    return conv.in_channels * conv.kernel * conv.kernel;
  }
};

template <class T>
Engine<T>::Engine(const Architecture& arch, std::size_t max_batch)
    : arch_(arch), max_batch_(max_batch) {
  arch_.validate();
  Shape shape{arch_.input_height, arch_.input_width, arch_.input_channels};
  input_size_ = shape.size();

  for (const LayerSpec& spec : arch_.layers) {
    Stage st;
    st.spec = spec;
    st.in = shape;
    st.out = output_shape(spec, shape);
    st.param_offset = param_count_;
    param_count_ += layer_param_count(spec);

    st.act.resize(max_batch_ * st.out.size());
    st.dact.resize(max_batch_ * st.out.size());
    if (const auto* conv = std::get_if<ConvSpec>(&spec)) {
      const std::size_t k = st.gemm_k();
      st.w.resize(std::size_t(conv->out_channels) * k);
      st.wt.resize(st.w.size());
      st.bias.resize(conv->out_channels);
      st.col.resize(max_batch_ * std::size_t(st.out.h) * st.out.w * k);
      st.dwt.resize(st.w.size());
    } else if (const auto* dense = std::get_if<DenseSpec>(&spec)) {
      st.w.resize(std::size_t(dense->outputs) * dense->inputs);
      st.wt.resize(st.w.size());
      st.bias.resize(dense->outputs);
      st.xt.resize(max_batch_ * std::size_t(dense->inputs));
      st.dwt.resize(st.w.size());
    } else if (std::holds_alternative<MaxPoolSpec>(spec)) {
      st.argmax.resize(max_batch_ * st.out.size());
    }
    shape = st.out;
    stages_.push_back(std::move(st));
  }
  output_size_ = shape.size();
  logit_grad_.resize(max_batch_ * output_size_);
  if (param_count_ != arch_.parameter_count())
    throw std::logic_error("parameter layout mismatch");
}

template <class T>
void Engine<T>::load_params(std::span<const T> flat) {
  if (flat.size() != param_count_)
    throw std::invalid_argument("parameter count mismatch");
  for (Stage& st : stages_) {
    const T* src = flat.data() + st.param_offset;
    if (const auto* conv = std::get_if<ConvSpec>(&st.spec)) {
      const std::size_t k = st.gemm_k();
      const std::size_t oc = conv->out_channels;
      std::copy_n(src, oc * k, st.w.begin());
      for (std::size_t o = 0; o < oc; ++o)
        for (std::size_t kk = 0; kk < k; ++kk)
          st.wt[kk * oc + o] = st.w[o * k + kk];
      std::copy_n(src + oc * k, oc, st.bias.begin());
    } else if (const auto* dense = std::get_if<DenseSpec>(&st.spec)) {
      const std::size_t in = dense->inputs, out = dense->outputs;
      std::copy_n(src, out * in, st.w.begin());
      for (std::size_t o = 0; o < out; ++o)
        for (std::size_t i = 0; i < in; ++i) st.wt[i * out + o] = st.w[o * in + i];
      std::copy_n(src + out * in, out, st.bias.begin());
    }
  }
}

template <class T>
void Engine<T>::load_params_f32(std::span<const float> flat) {
  if constexpr (std::is_same_v<T, float>) {
    load_params(flat);
  } else {
    std::vector<T> widened(flat.begin(), flat.end());
    load_params(widened);
  }
}

namespace {

// col row for output position (y,x): kernel offsets outer, channels inner.
template <class T>
void im2col_image(const T* in, std::uint32_t h, std::uint32_t w,
                  std::uint32_t c, const ConvSpec& conv, std::uint32_t out_h,
                  std::uint32_t out_w, T* col) {
  const std::uint32_t k = conv.kernel;
  const std::size_t row_len = std::size_t(k) * k * c;
  for (std::uint32_t y = 0; y < out_h; ++y) {
    for (std::uint32_t x = 0; x < out_w; ++x) {
      T* row = col + (std::size_t(y) * out_w + x) * row_len;
      for (std::uint32_t dy = 0; dy < k; ++dy) {
        const std::int64_t sy = std::int64_t(y) + dy - conv.pad;
        for (std::uint32_t dx = 0; dx < k; ++dx) {
          const std::int64_t sx = std::int64_t(x) + dx - conv.pad;
          T* dst = row + (std::size_t(dy) * k + dx) * c;
          if (sy >= 0 && sy < h && sx >= 0 && sx < w) {
            const T* src = in + (std::size_t(sy) * w + sx) * c;
            std::copy_n(src, c, dst);
          } else {
            std::fill_n(dst, c, T(0));
          }
        }
      }
    }
  }
}

}  // namespace

template <class T>
void Engine<T>::run_forward(const T* input, std::size_t m) {
  if (m > max_batch_) throw std::invalid_argument("batch exceeds capacity");
  const T* cur = input;
  for (Stage& st : stages_) {
    const std::size_t in_size = st.in.size();
    const std::size_t out_size = st.out.size();

    if (const auto* conv = std::get_if<ConvSpec>(&st.spec)) {
      const std::size_t k = st.gemm_k();
      const std::size_t p_count = std::size_t(st.out.h) * st.out.w;
      const std::size_t oc = conv->out_channels;
      parallel_chunks(m, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t b = lo; b < hi; ++b) {
          T* col = st.col.data() + b * p_count * k;
          im2col_image(cur + b * in_size, st.in.h, st.in.w, st.in.c, *conv,
                       st.out.h, st.out.w, col);
          T* out = st.act.data() + b * out_size;
          for (std::size_t p = 0; p < p_count; ++p) {
            T* row = out + p * oc;
            std::copy_n(st.bias.data(), oc, row);
            const T* col_row = col + p * k;
            for (std::size_t kk = 0; kk < k; ++kk)
              axpy(col_row[kk], st.wt.data() + kk * oc, row, oc);
          }
        }
      });
    } else if (std::holds_alternative<ReluSpec>(st.spec)) {
      parallel_chunks(m, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t b = lo; b < hi; ++b) {
          const T* in = cur + b * in_size;
          T* out = st.act.data() + b * out_size;
          for (std::size_t i = 0; i < out_size; ++i)
            out[i] = in[i] > T(0) ? in[i] : T(0);
        }
      });
    } else if (const auto* pool = std::get_if<MaxPoolSpec>(&st.spec)) {
      const std::uint32_t v = pool->window;
      const std::uint32_t c = st.in.c;
      parallel_chunks(m, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t b = lo; b < hi; ++b) {
          const T* in = cur + b * in_size;
          T* out = st.act.data() + b * out_size;
          std::uint32_t* arg = st.argmax.data() + b * out_size;
          for (std::uint32_t y = 0; y < st.out.h; ++y) {
            for (std::uint32_t x = 0; x < st.out.w; ++x) {
              T* orow = out + (std::size_t(y) * st.out.w + x) * c;
              std::uint32_t* arow = arg + (std::size_t(y) * st.out.w + x) * c;
              for (std::uint32_t ch = 0; ch < c; ++ch) {
                T best{};
                std::uint32_t best_idx = 0;
                bool first = true;
                for (std::uint32_t dy = 0; dy < v; ++dy) {
                  for (std::uint32_t dx = 0; dx < v; ++dx) {
                    const std::uint32_t sy = y * v + dy, sx = x * v + dx;
                    const std::uint32_t idx =
                        (sy * st.in.w + sx) * c + ch;
                    // first strict maximum wins
                    if (first || in[idx] > best) {
                      best = in[idx];
                      best_idx = idx;
                      first = false;
                    }
                  }
                }
                orow[ch] = best;
                arow[ch] = best_idx;
              }
            }
          }
        }
      });
    } else {
      const auto& dense = std::get<DenseSpec>(st.spec);
      const std::size_t in_n = dense.inputs, out_n = dense.outputs;
      parallel_chunks(m, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t b = lo; b < hi; ++b)
          std::copy_n(st.bias.data(), out_n, st.act.data() + b * out_size);
        for (std::size_t i = 0; i < in_n; ++i) {
          const T* wt_row = st.wt.data() + i * out_n;
          for (std::size_t b = lo; b < hi; ++b)
            axpy(cur[b * in_size + i], wt_row, st.act.data() + b * out_size,
                 out_n);
        }
      });
    }
    cur = st.act.data();
  }
}

template <class T>
void Engine<T>::forward(const T* input, std::size_t m, T* logits) {
  run_forward(input, m);
  std::copy_n(stages_.back().act.data(), m * output_size_, logits);
}

template <class T>
double Engine<T>::forward_backward(const T* input, std::size_t m,
                                   const std::uint8_t* labels, T* grads) {
  run_forward(input, m);
  const std::size_t classes = output_size_;
  const T* logits = stages_.back().act.data();

  // softmax cross-entropy; loss and normalizers in double
  double loss = 0.0;
  for (std::size_t b = 0; b < m; ++b) {
    const T* row = logits + b * classes;
    double mx = row[0];
    for (std::size_t k = 1; k < classes; ++k) mx = std::max(mx, double(row[k]));
    double denom = 0.0;
    for (std::size_t k = 0; k < classes; ++k) denom += std::exp(double(row[k]) - mx);
    loss += mx + std::log(denom) - double(row[labels[b]]);
    T* g = logit_grad_.data() + b * classes;
    for (std::size_t k = 0; k < classes; ++k) {
      const double p = std::exp(double(row[k]) - mx) / denom;
      g[k] = T((p - (k == labels[b] ? 1.0 : 0.0)) / double(m));
    }
  }
  loss /= double(m);

  std::fill_n(grads, param_count_, T(0));

  for (std::size_t si = stages_.size(); si-- > 0;) {
    Stage& st = stages_[si];
    const T* dout = (si + 1 == stages_.size())
                        ? logit_grad_.data()
                        : stages_[si].dact.data();
    const T* in_act = (si == 0) ? input : stages_[si - 1].act.data();
    T* din = (si == 0) ? nullptr : stages_[si - 1].dact.data();
    const std::size_t in_size = st.in.size();
    const std::size_t out_size = st.out.size();

    if (const auto* conv = std::get_if<ConvSpec>(&st.spec)) {
      const std::size_t k = st.gemm_k();
      const std::size_t p_count = std::size_t(st.out.h) * st.out.w;
      const std::size_t oc = conv->out_channels;
      T* gw = grads + st.param_offset;
      T* gb = gw + oc * k;

      // dW accumulated in [K][OC] order; threads own disjoint kk ranges and
      // sweep (b,p) ascending, so the sum order per element is fixed.
      std::fill(st.dwt.begin(), st.dwt.end(), T(0));
      parallel_chunks(k, [&](std::size_t klo, std::size_t khi) {
        for (std::size_t b = 0; b < m; ++b) {
          const T* col = st.col.data() + b * p_count * k;
          const T* dyb = dout + b * out_size;
          for (std::size_t p = 0; p < p_count; ++p) {
            const T* col_row = col + p * k;
            const T* dy_row = dyb + p * oc;
            for (std::size_t kk = klo; kk < khi; ++kk)
              axpy(col_row[kk], dy_row, st.dwt.data() + kk * oc, oc);
          }
        }
      });
      for (std::size_t o = 0; o < oc; ++o)
        for (std::size_t kk = 0; kk < k; ++kk)
          gw[o * k + kk] = st.dwt[kk * oc + o];
      for (std::size_t b = 0; b < m; ++b)
        for (std::size_t p = 0; p < p_count; ++p)
          axpy(T(1), dout + b * out_size + p * oc, gb, oc);

      if (din) {
        std::fill_n(din, m * in_size, T(0));
        parallel_chunks(m, [&](std::size_t lo, std::size_t hi) {
          std::vector<T> dcol(p_count * k);
          for (std::size_t b = lo; b < hi; ++b) {
            std::fill(dcol.begin(), dcol.end(), T(0));
            const T* dyb = dout + b * out_size;
            for (std::size_t p = 0; p < p_count; ++p) {
              T* dcol_row = dcol.data() + p * k;
              const T* dy_row = dyb + p * oc;
              for (std::size_t o = 0; o < oc; ++o)
                axpy(dy_row[o], st.w.data() + o * k, dcol_row, k);
            }
            // col2im scatter-add
            const std::uint32_t kk = conv->kernel;
            for (std::uint32_t y = 0; y < st.out.h; ++y) {
              for (std::uint32_t x = 0; x < st.out.w; ++x) {
                const T* dcol_row =
                    dcol.data() + (std::size_t(y) * st.out.w + x) * k;
                for (std::uint32_t dy = 0; dy < kk; ++dy) {
                  const std::int64_t sy = std::int64_t(y) + dy - conv->pad;
                  if (sy < 0 || sy >= st.in.h) continue;
                  for (std::uint32_t dx = 0; dx < kk; ++dx) {
                    const std::int64_t sx = std::int64_t(x) + dx - conv->pad;
                    if (sx < 0 || sx >= st.in.w) continue;
                    axpy(T(1), dcol_row + (std::size_t(dy) * kk + dx) * st.in.c,
                         din + b * in_size +
                             (std::size_t(sy) * st.in.w + sx) * st.in.c,
                         st.in.c);
                  }
                }
              }
            }
          }
        });
      }
    } else if (std::holds_alternative<ReluSpec>(st.spec)) {
      if (din) {
        parallel_chunks(m, [&](std::size_t lo, std::size_t hi) {
          for (std::size_t b = lo; b < hi; ++b) {
            const T* act = st.act.data() + b * out_size;
            const T* dy = dout + b * out_size;
            T* dx = din + b * in_size;
            for (std::size_t i = 0; i < out_size; ++i)
              dx[i] = act[i] > T(0) ? dy[i] : T(0);
          }
        });
      }
    } else if (std::holds_alternative<MaxPoolSpec>(st.spec)) {
      if (din) {
        parallel_chunks(m, [&](std::size_t lo, std::size_t hi) {
          for (std::size_t b = lo; b < hi; ++b) {
            T* dx = din + b * in_size;
            std::fill_n(dx, in_size, T(0));
            const T* dy = dout + b * out_size;
            const std::uint32_t* arg = st.argmax.data() + b * out_size;
            for (std::size_t i = 0; i < out_size; ++i) dx[arg[i]] += dy[i];
          }
        });
      }
    } else {
      const auto& dense = std::get<DenseSpec>(st.spec);
      const std::size_t in_n = dense.inputs, out_n = dense.outputs;
      T* gw = grads + st.param_offset;
      T* gb = gw + out_n * in_n;

      // xt[i][b] = act[b][i]
      parallel_chunks(in_n, [&](std::size_t ilo, std::size_t ihi) {
        for (std::size_t i = ilo; i < ihi; ++i)
          for (std::size_t b = 0; b < m; ++b)
            st.xt[i * max_batch_ + b] = in_act[b * in_size + i];
      });
      std::fill(st.dwt.begin(), st.dwt.end(), T(0));
      parallel_chunks(in_n, [&](std::size_t ilo, std::size_t ihi) {
        for (std::size_t i = ilo; i < ihi; ++i) {
          T* row = st.dwt.data() + i * out_n;
          const T* xti = st.xt.data() + i * max_batch_;
          for (std::size_t b = 0; b < m; ++b)
            axpy(xti[b], dout + b * out_size, row, out_n);
        }
      });
      for (std::size_t o = 0; o < out_n; ++o)
        for (std::size_t i = 0; i < in_n; ++i)
          gw[o * in_n + i] = st.dwt[i * out_n + o];
      for (std::size_t b = 0; b < m; ++b) axpy(T(1), dout + b * out_size, gb, out_n);

      if (din) {
        parallel_chunks(m, [&](std::size_t lo, std::size_t hi) {
          for (std::size_t b = lo; b < hi; ++b)
            std::fill_n(din + b * in_size, in_size, T(0));
          for (std::size_t o = 0; o < out_n; ++o) {
            const T* w_row = st.w.data() + o * in_n;
            for (std::size_t b = lo; b < hi; ++b)
              axpy(dout[b * out_size + o], w_row, din + b * in_size, in_n);
          }
        });
      }
    }
  }
  return loss;
}

std::vector<std::uint32_t> nhwc_marshal_map(std::uint32_t channels,
                                            std::uint32_t height,
                                            std::uint32_t width) {
  std::vector<std::uint32_t> map(std::size_t(channels) * height * width);
  std::size_t i = 0;
  for (std::uint32_t y = 0; y < height; ++y)
    for (std::uint32_t x = 0; x < width; ++x)
      for (std::uint32_t c = 0; c < channels; ++c)
        map[i++] = (c * height + y) * width + x;
  return map;
}

template class Engine<float>;
template class Engine<double>;

}  // namespace keylock
