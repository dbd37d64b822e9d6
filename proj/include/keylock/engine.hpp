#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "keylock/nettrain.hpp"

namespace keylock {

// Reusable forward/backward executor. Activations are laid out NHWC
// ([image][y*W+x][channel]); parameters are packed from the model's flat
// vector into per-layer working copies (including transposes) so every inner
// loop is a contiguous fused-multiply-add over the channel axis.
//
// All reductions accumulate per output element in a fixed order, so results
// are bit-identical for any worker count. Instantiated for float (training)
// and double (gradient checking).
template <class T>
class Engine {
 public:
  Engine(const Architecture& arch, std::size_t max_batch);

  std::size_t input_size() const { return input_size_; }   // per image
  std::size_t output_size() const { return output_size_; } // per image
  std::size_t max_batch() const { return max_batch_; }

  void load_params(std::span<const T> flat);
  void load_params_f32(std::span<const float> flat);

  // input: m * input_size() values, NHWC. logits: m * output_size().
  void forward(const T* input, std::size_t m, T* logits);

  // Forward + softmax cross-entropy + backward. Returns the mean loss and
  // fills grads (parameter-shaped flat vector, already mean-scaled).
  double forward_backward(const T* input, std::size_t m,
                          const std::uint8_t* labels, T* grads);

 private:
  struct Stage;  // one executable layer with its buffers

  Architecture arch_;
  std::size_t max_batch_;
  std::size_t input_size_ = 0, output_size_ = 0;
  std::size_t param_count_ = 0;
  std::vector<Stage> stages_;
  std::vector<T> logit_grad_;

  void run_forward(const T* input, std::size_t m);
};

// NHWC gather map for feeding ImageTensor data (channel-major) into an
// engine; compose with a ShufflePlan's flat map to fuse keyed shuffling into
// batch marshalling.
std::vector<std::uint32_t> nhwc_marshal_map(std::uint32_t channels,
                                            std::uint32_t height,
                                            std::uint32_t width);

template <class T>
void marshal_image(const ImageTensor& img,
                   std::span<const std::uint32_t> map, T* out) {
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = T(img.data[map[i]]);
}

}  // namespace keylock
