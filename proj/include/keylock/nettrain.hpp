#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "keylock/tensor.hpp"

namespace keylock {

// stride-1 convolution
struct ConvSpec {
  std::uint32_t in_channels, out_channels, kernel, pad;
};
struct ReluSpec {};
struct MaxPoolSpec {
  std::uint32_t window;  // stride == window
};
struct DenseSpec {
  std::uint32_t inputs, outputs;
};
using LayerSpec = std::variant<ConvSpec, ReluSpec, MaxPoolSpec, DenseSpec>;

struct Architecture {
  std::uint32_t input_channels = 3;
  std::uint32_t input_height = 32;
  std::uint32_t input_width = 32;
  std::vector<LayerSpec> layers;

  // conv 3->32 (3x3, pad 1) + relu, 2x2 pool, conv 32->64 + relu, 2x2 pool,
  // dense 4096->256 + relu, dense 256->10
  static Architecture desk_reference();

  std::size_t parameter_count() const;

  // Stable one-line descriptor; parse() is its exact inverse.
  std::string describe() const;
  static Architecture parse(const std::string& descriptor);

  // Checks the shape chain (conv channels, pool divisibility, dense fan-in).
  // Throws std::invalid_argument on mismatch.
  void validate() const;
};

// Parameters are one flat vector, grouped per layer in declaration order:
// conv: weights [out_ch][(dy*kernel+dx)*in_ch + ci], then bias[out_ch];
// dense: weights [out][in], then bias[out].
struct Model {
  Architecture arch;
  std::vector<float> params;
};

// Fan-in-scaled uniform init: weights uniform in +-sqrt(6/fan_in), biases
// zero. Deterministic in the seed.
Model make_model(const Architecture& arch, std::uint64_t seed);

// Non-owning view of a batch.
struct Minibatch {
  std::span<const ImageTensor> images;
  std::span<const std::uint8_t> labels;
  std::size_t size() const { return images.size(); }
};

// Logits, row-major m x classes. Per-image results are independent of batch
// composition (bit-exact).
std::vector<float> forward(const Model& model, const Minibatch& batch);

// Mean of -log softmax(logits)[label], accumulated in double with
// max-subtraction.
double cross_entropy(std::span<const float> logits,
                     std::span<const std::uint8_t> labels);

// Analytic gradients of the mean loss w.r.t. every parameter.
std::vector<float> backward(const Model& model, const Minibatch& batch);

struct OptimState {
  std::vector<float> momentum;
  float momentum_coef = 0.9f;
  float weight_decay = 5e-4f;

  static OptimState for_model(const Model& model);
};

// buffer <- momentum*buffer + (grad + wd*param); param <- param - lr*buffer.
// Throws std::runtime_error("diverged") on non-finite gradients.
void sgd_step(Model& model, std::span<const float> grads, OptimState& state,
              float lr);

// Single triangular cycle: 0 -> max_lr over the first 45% of steps, then
// max_lr -> 0 over the remainder. Throws if step >= total_steps.
double cyclic_lr(std::uint64_t step, std::uint64_t total_steps, double max_lr);

// Central finite differences against the analytic backward on a deterministic
// subsample of parameters (>= 200 when the model has that many, spread over
// every parameter group). Evaluations run in a 64-bit engine. Returns the max
// relative error |a-n| / max(1, |a|, |n|).
double grad_check(const Model& model, const Minibatch& batch, double epsilon);

// Versioned binary checkpoint: header (version, architecture descriptor,
// block size M, key fingerprint) + little-endian float32 parameters. The
// secret key itself is never stored; `fingerprint` is empty for baselines.
void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     std::uint32_t block, const std::string& fingerprint);

struct Checkpoint {
  Model model;
  std::uint32_t block = 0;     // 0 = trained on plain images
  std::string fingerprint;     // empty for baselines
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace keylock
