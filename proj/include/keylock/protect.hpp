#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "keylock/blockshuffle.hpp"
#include "keylock/dataio.hpp"
#include "keylock/keycore.hpp"
#include "keylock/nettrain.hpp"

namespace keylock {

struct ProtectionConfig {
  std::uint32_t block = 4;  // M
  std::uint32_t epochs = 30;
  std::uint32_t batch_size = 128;

  float max_lr = 0.08f;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;

  std::uint64_t seed = 1;

  // desk-scale subset sizes applied by run_protocol; 0 means the full split
  std::uint32_t train_subset = 10000;
  std::uint32_t test_subset = 2000;

  std::uint32_t forged_keys = 5;
  std::vector<std::uint32_t> attack_sizes = {100, 500, 1000};
  std::uint32_t attack_epochs = 30;

  // block sizes run_protocol trains; one row per entry in the report
  std::vector<std::uint32_t> protocol_blocks = {4};

  AugmentConfig augment;
  Architecture arch = Architecture::desk_reference();

  bool collect_timings = true;

  void validate() const;  // throws on M not dividing the input, epochs < 1, ...
};

struct AttackResult {
  std::uint32_t subset_size = 0;
  std::uint32_t epochs = 0;
  double accuracy = 0.0;
};

struct ProtectedCell {
  std::uint32_t block = 0;
  std::string key_fingerprint;
  double accuracy_correct = 0.0;
  std::vector<double> accuracy_forged;  // one per sampled forged key
  double accuracy_forged_mean = 0.0;
  double accuracy_plain = 0.0;
  std::vector<AttackResult> attacks;
  bool attack_monotone = true;  // non-decreasing in |D'|; reported, not enforced
  double train_seconds = 0.0;
};

struct ProtocolTimings {
  double baseline_train_seconds = 0.0;
  double shuffle_us_per_image = 0.0;   // single-thread, plan reused
  double forward_us_per_image = 0.0;   // single-thread, batch of one
  double shuffle_overhead_ratio = 0.0; // shuffle time / forward time
  double shuffle_images_per_second = 0.0;
};

struct ProtectionReport {
  static constexpr std::uint32_t kSchemaVersion = 1;

  double baseline_accuracy = 0.0;
  std::vector<ProtectedCell> cells;
  std::optional<ProtocolTimings> timings;

  // config echo for reproducibility
  std::uint32_t epochs = 0;
  std::uint32_t batch_size = 0;
  float max_lr = 0.0f;
  std::uint64_t seed = 0;
  std::uint32_t train_size = 0;
  std::uint32_t test_size = 0;
  std::string architecture;

  std::string to_json() const;  // stable field schema, versioned
  static ProtectionReport from_json(const std::string& text);
};

// Trains on the given dataset; every minibatch is augmented, then shuffled
// with the permutation derived from (key, c*M*M), then fed to one
// forward/backward/SGD step under the single-cycle schedule. Deterministic
// in cfg.seed.
Model train_protected(const LabeledDataset& train, const SecretKey& key,
                      const ProtectionConfig& cfg);

// Same training loop without the shuffle stage.
Model train_baseline(const LabeledDataset& train, const ProtectionConfig& cfg);

// Accuracy over the test set. With a key, every image is shuffled (no
// augmentation); without, plain images are fed. Argmax ties break toward the
// lowest class index. Throws on an empty dataset.
double evaluate(const Model& model, const LabeledDataset& test,
                const std::optional<SecretKey>& key,
                const ProtectionConfig& cfg);

// Continues SGD from `model` on dprime preprocessed with the forged key
// (fresh momentum, fresh single-cycle schedule over the attack epochs).
// Returns the adapted model and its test accuracy under the forged key.
std::pair<Model, double> finetune_attack(const Model& model,
                                         const LabeledDataset& dprime,
                                         const LabeledDataset& test,
                                         const SecretKey& forged_key,
                                         std::uint32_t epochs,
                                         const ProtectionConfig& cfg);

struct SweepResult {
  std::vector<SecretKey> keys;
  std::vector<double> accuracies;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

// Evaluates the model under n_keys forged keys sampled deterministically
// from `seed`.
SweepResult wrong_key_sweep(const Model& model, const LabeledDataset& test,
                            std::uint32_t n_keys, std::uint64_t seed,
                            const ProtectionConfig& cfg);

// Same, with caller-chosen keys (e.g. to include the correct one).
SweepResult sweep_keys(const Model& model, const LabeledDataset& test,
                       std::span<const SecretKey> keys,
                       const ProtectionConfig& cfg);

// The full experiment grid: baseline, one protected model per configured M,
// correct/forged/plain evaluations and fine-tuning attacks per size.
ProtectionReport run_protocol(const LabeledDataset& train,
                              const LabeledDataset& test,
                              const ProtectionConfig& cfg);

}  // namespace keylock
