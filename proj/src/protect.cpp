#include "keylock/protect.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "keylock/engine.hpp"
#include "keylock/parallel.hpp"
#include "keylock/rng.hpp"

namespace keylock {

namespace {

// sub-seed streams derived from cfg.seed
enum SeedStream : std::uint64_t {
  kSeedInit = 0,
  kSeedOrder = 1,
  kSeedAugment = 2,
  kSeedTrainSubset = 3,
  kSeedTestSubset = 4,
  kSeedModelKey = 5,
  kSeedForgedEval = 6,
  kSeedAttack = 7,
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// marshal map feeding engine input straight from channel-major tensors,
// with the keyed shuffle fused in when a key is present
std::vector<std::uint32_t> build_input_map(const Architecture& arch,
                                           const SecretKey* key,
                                           std::uint32_t block) {
  auto map = nhwc_marshal_map(arch.input_channels, arch.input_height,
                              arch.input_width);
  if (!key) return map;
  const ShuffleConfig cfg{block, arch.input_channels};
  const Permutation perm = derive_permutation(*key, cfg.vector_length());
  const ShufflePlan plan(cfg, perm, arch.input_height, arch.input_width);
  const auto& flat = plan.flat_map();
  for (std::uint32_t& m : map) m = flat[m];
  return map;
}

void check_dataset(const LabeledDataset& data, const Architecture& arch) {
  if (data.images.size() != data.labels.size())
    throw std::invalid_argument("image/label count mismatch");
  for (const ImageTensor& img : data.images)
    if (img.channels != arch.input_channels ||
        img.height != arch.input_height || img.width != arch.input_width)
      throw std::invalid_argument("dataset shape does not match architecture");
}

Model train_impl(const Model* warm_start, const LabeledDataset& data,
                 const SecretKey* key, const ProtectionConfig& cfg,
                 std::uint32_t epochs, std::uint64_t seed) {
  cfg.validate();
  check_dataset(data, cfg.arch);
  if (data.size() == 0) throw std::invalid_argument("empty dataset");
  if (epochs < 1) throw std::invalid_argument("epochs must be positive");

  const std::size_t n = data.size();
  const std::size_t batch = std::min<std::size_t>(cfg.batch_size, n);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const std::uint64_t total_steps = std::uint64_t(epochs) * steps_per_epoch;

  const auto map = build_input_map(cfg.arch, key, cfg.block);

  Model model = warm_start ? *warm_start
                           : make_model(cfg.arch, split_seed(seed, kSeedInit));
  OptimState opt = OptimState::for_model(model);
  opt.momentum_coef = cfg.momentum;
  opt.weight_decay = cfg.weight_decay;

  Engine<float> engine(cfg.arch, batch);
  engine.load_params(model.params);

  const std::size_t in_size = engine.input_size();
  std::vector<float> input(batch * in_size);
  std::vector<std::uint8_t> labels(batch);
  std::vector<float> grads(model.params.size());
  std::vector<ImageTensor> aug(batch);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng order_rng(split_seed(seed, kSeedOrder));
  const std::uint64_t augment_seed = split_seed(seed, kSeedAugment);

  std::uint64_t step = 0;
  for (std::uint32_t epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = order_rng.next_below(std::uint32_t(i + 1));
      std::swap(order[i], order[j]);
    }
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t bs = std::min(batch, n - start);
      const std::uint64_t instance_base = std::uint64_t(epoch) * n + start;
      parallel_chunks(bs, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
          const std::size_t idx = order[start + i];
          // per-instance stream: reproducible for any worker count
          Rng rng(split_seed(augment_seed, instance_base + i));
          augment_into(data.images[idx], cfg.augment, rng, aug[i]);
          marshal_image(aug[i], map, input.data() + i * in_size);
          labels[i] = data.labels[idx];
        }
      });
      const float lr = float(cyclic_lr(step, total_steps, cfg.max_lr));
      engine.forward_backward(input.data(), bs, labels.data(), grads.data());
      sgd_step(model, grads, opt, lr);
      engine.load_params(model.params);
      ++step;
    }
  }
  return model;
}

}  // namespace

void ProtectionConfig::validate() const {
  arch.validate();
  if (epochs < 1) throw std::invalid_argument("epochs must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
  if (block < 1) throw std::invalid_argument("block size must be positive");
  if (arch.input_height % block != 0 || arch.input_width % block != 0)
    throw std::invalid_argument("block size does not divide image");
  if (!(max_lr > 0.0f)) throw std::invalid_argument("max_lr must be positive");
}

Model train_protected(const LabeledDataset& train, const SecretKey& key,
                      const ProtectionConfig& cfg) {
  return train_impl(nullptr, train, &key, cfg, cfg.epochs, cfg.seed);
}

Model train_baseline(const LabeledDataset& train, const ProtectionConfig& cfg) {
  return train_impl(nullptr, train, nullptr, cfg, cfg.epochs, cfg.seed);
}

double evaluate(const Model& model, const LabeledDataset& test,
                const std::optional<SecretKey>& key,
                const ProtectionConfig& cfg) {
  if (test.size() == 0) throw std::invalid_argument("empty dataset");
  check_dataset(test, model.arch);

  const auto map =
      build_input_map(model.arch, key ? &*key : nullptr, cfg.block);

  const std::size_t batch = std::min<std::size_t>(cfg.batch_size, test.size());
  Engine<float> engine(model.arch, batch);
  engine.load_params(model.params);
  const std::size_t in_size = engine.input_size();
  const std::size_t classes = engine.output_size();

  std::vector<float> input(batch * in_size);
  std::vector<float> logits(batch * classes);
  std::size_t correct = 0;
  for (std::size_t start = 0; start < test.size(); start += batch) {
    const std::size_t bs = std::min(batch, test.size() - start);
    parallel_chunks(bs, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i)
        marshal_image(test.images[start + i], map,
                      input.data() + i * in_size);
    });
    engine.forward(input.data(), bs, logits.data());
    for (std::size_t i = 0; i < bs; ++i) {
      const float* row = logits.data() + i * classes;
      std::size_t best = 0;
      for (std::size_t k = 1; k < classes; ++k)
        if (row[k] > row[best]) best = k;  // ties keep the lowest index
      if (best == test.labels[start + i]) ++correct;
    }
  }
  return double(correct) / double(test.size());
}

std::pair<Model, double> finetune_attack(const Model& model,
                                         const LabeledDataset& dprime,
                                         const LabeledDataset& test,
                                         const SecretKey& forged_key,
                                         std::uint32_t epochs,
                                         const ProtectionConfig& cfg) {
  if (dprime.size() == 0) throw std::invalid_argument("empty dataset");
  Model adapted = model;
  if (epochs > 0) {
    adapted = train_impl(&model, dprime, &forged_key, cfg, epochs,
                         split_seed(cfg.seed, kSeedAttack));
  }
  const double acc = evaluate(adapted, test, forged_key, cfg);
  return {std::move(adapted), acc};
}

SweepResult sweep_keys(const Model& model, const LabeledDataset& test,
                       std::span<const SecretKey> keys,
                       const ProtectionConfig& cfg) {
  if (keys.empty()) throw std::invalid_argument("no keys to sweep");
  SweepResult result;
  result.keys.assign(keys.begin(), keys.end());
  for (const SecretKey& key : keys)
    result.accuracies.push_back(evaluate(model, test, key, cfg));
  result.mean =
      std::accumulate(result.accuracies.begin(), result.accuracies.end(), 0.0) /
      double(result.accuracies.size());
  const auto [mn, mx] =
      std::minmax_element(result.accuracies.begin(), result.accuracies.end());
  result.min = *mn;
  result.max = *mx;
  return result;
}

SweepResult wrong_key_sweep(const Model& model, const LabeledDataset& test,
                            std::uint32_t n_keys, std::uint64_t seed,
                            const ProtectionConfig& cfg) {
  if (n_keys < 1) throw std::invalid_argument("n_keys must be positive");
  std::vector<SecretKey> keys;
  keys.reserve(n_keys);
  for (std::uint32_t i = 0; i < n_keys; ++i)
    keys.push_back(generate_key(split_seed(seed, i)));
  return sweep_keys(model, test, keys, cfg);
}

namespace {

ProtocolTimings measure_timings(const Model& baseline,
                                const LabeledDataset& test,
                                const ProtectionConfig& cfg) {
  ProtocolTimings t;

  // single-thread shuffle cost with a reused plan
  const ShuffleConfig scfg{cfg.block, cfg.arch.input_channels};
  const SecretKey key = generate_key(std::uint64_t(0));
  const Permutation perm = derive_permutation(key, scfg.vector_length());
  const ShufflePlan plan(scfg, perm, cfg.arch.input_height,
                         cfg.arch.input_width);
  const std::size_t n_shuffle = std::min<std::size_t>(test.size(), 2000);
  ImageTensor out;
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < n_shuffle; ++i)
    plan.apply(test.images[i % test.size()], out);
  const double shuffle_s = seconds_since(t0);
  t.shuffle_us_per_image = shuffle_s / double(n_shuffle) * 1e6;
  t.shuffle_images_per_second = double(n_shuffle) / shuffle_s;

  // single-thread forward cost: batch of one keeps every internal loop inline
  Engine<float> engine(baseline.arch, 1);
  engine.load_params(baseline.params);
  const auto map = nhwc_marshal_map(cfg.arch.input_channels,
                                    cfg.arch.input_height,
                                    cfg.arch.input_width);
  std::vector<float> input(engine.input_size());
  std::vector<float> logits(engine.output_size());
  marshal_image(test.images[0], map, input.data());
  engine.forward(input.data(), 1, logits.data());  // warm up
  const std::size_t reps = 200;
  const auto t1 = Clock::now();
  for (std::size_t i = 0; i < reps; ++i)
    engine.forward(input.data(), 1, logits.data());
  t.forward_us_per_image = seconds_since(t1) / double(reps) * 1e6;
  t.shuffle_overhead_ratio = t.shuffle_us_per_image / t.forward_us_per_image;
  return t;
}

}  // namespace

ProtectionReport run_protocol(const LabeledDataset& train,
                              const LabeledDataset& test,
                              const ProtectionConfig& cfg) {
  cfg.validate();
  if (train.size() == 0 || test.size() == 0)
    throw std::invalid_argument("empty dataset");

  const LabeledDataset train_pool =
      (cfg.train_subset > 0 && cfg.train_subset < train.size())
          ? sample_subset(train, cfg.train_subset,
                          split_seed(cfg.seed, kSeedTrainSubset))
          : train;
  const LabeledDataset test_pool =
      (cfg.test_subset > 0 && cfg.test_subset < test.size())
          ? sample_subset(test, cfg.test_subset,
                          split_seed(cfg.seed, kSeedTestSubset))
          : test;

  ProtectionReport report;
  report.epochs = cfg.epochs;
  report.batch_size = cfg.batch_size;
  report.max_lr = cfg.max_lr;
  report.seed = cfg.seed;
  report.train_size = std::uint32_t(train_pool.size());
  report.test_size = std::uint32_t(test_pool.size());
  report.architecture = cfg.arch.describe();

  double baseline_seconds = 0.0;
  const auto tb = Clock::now();
  const Model baseline = train_baseline(train_pool, cfg);
  baseline_seconds = seconds_since(tb);
  report.baseline_accuracy = evaluate(baseline, test_pool, std::nullopt, cfg);

  for (std::uint32_t m : cfg.protocol_blocks) {
    ProtectionConfig mcfg = cfg;
    mcfg.block = m;
    mcfg.validate();

    const SecretKey key =
        generate_key(split_seed(split_seed(cfg.seed, kSeedModelKey), m));

    ProtectedCell cell;
    cell.block = m;
    cell.key_fingerprint = key.fingerprint();

    const auto t0 = Clock::now();
    const Model model = train_protected(train_pool, key, mcfg);
    cell.train_seconds = seconds_since(t0);

    cell.accuracy_correct = evaluate(model, test_pool, key, mcfg);
    cell.accuracy_plain = evaluate(model, test_pool, std::nullopt, mcfg);

    const std::uint64_t forged_base =
        split_seed(split_seed(cfg.seed, kSeedForgedEval), m);
    for (std::uint32_t i = 0; i < cfg.forged_keys; ++i) {
      SecretKey forged = generate_key(split_seed(forged_base, i));
      while (forged == key)  // astronomically unlikely
        forged = generate_key(split_seed(forged_base, 100000 + i));
      cell.accuracy_forged.push_back(evaluate(model, test_pool, forged, mcfg));
    }
    if (!cell.accuracy_forged.empty())
      cell.accuracy_forged_mean =
          std::accumulate(cell.accuracy_forged.begin(),
                          cell.accuracy_forged.end(), 0.0) /
          double(cell.accuracy_forged.size());

    const std::uint64_t attack_base =
        split_seed(split_seed(cfg.seed, kSeedAttack), m);
    const SecretKey attack_key = generate_key(split_seed(attack_base, 0));
    double prev = -1.0;
    for (std::uint32_t size : cfg.attack_sizes) {
      const LabeledDataset dprime = sample_subset(
          train_pool, std::min<std::size_t>(size, train_pool.size()),
          split_seed(attack_base, size));
      const auto [adapted, acc] = finetune_attack(
          model, dprime, test_pool, attack_key, cfg.attack_epochs, mcfg);
      cell.attacks.push_back({size, cfg.attack_epochs, acc});
      if (acc < prev) cell.attack_monotone = false;
      prev = acc;
    }

    report.cells.push_back(std::move(cell));
  }

  if (cfg.collect_timings) {
    ProtocolTimings t = measure_timings(baseline, test_pool, cfg);
    t.baseline_train_seconds = baseline_seconds;
    report.timings = t;
  }
  return report;
}

std::string ProtectionReport::to_json() const {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["config"] = {
      {"epochs", epochs},       {"batch_size", batch_size},
      {"max_lr", max_lr},       {"seed", seed},
      {"train_size", train_size}, {"test_size", test_size},
      {"architecture", architecture},
  };
  j["baseline"] = {{"accuracy", baseline_accuracy}};
  nlohmann::json cells_json = nlohmann::json::array();
  for (const ProtectedCell& cell : cells) {
    nlohmann::json c;
    c["block"] = cell.block;
    c["key_fingerprint"] = cell.key_fingerprint;
    c["accuracy_correct"] = cell.accuracy_correct;
    c["accuracy_forged"] = cell.accuracy_forged;
    c["accuracy_forged_mean"] = cell.accuracy_forged_mean;
    c["accuracy_plain"] = cell.accuracy_plain;
    nlohmann::json attacks_json = nlohmann::json::array();
    for (const AttackResult& a : cell.attacks)
      attacks_json.push_back({{"subset_size", a.subset_size},
                              {"epochs", a.epochs},
                              {"accuracy", a.accuracy}});
    c["attacks"] = attacks_json;
    c["attack_monotone"] = cell.attack_monotone;
    cells_json.push_back(c);
  }
  j["models"] = cells_json;
  if (timings) {
    j["timings"] = {
        {"baseline_train_seconds", timings->baseline_train_seconds},
        {"shuffle_us_per_image", timings->shuffle_us_per_image},
        {"forward_us_per_image", timings->forward_us_per_image},
        {"shuffle_overhead_ratio", timings->shuffle_overhead_ratio},
        {"shuffle_images_per_second", timings->shuffle_images_per_second},
        {"cell_train_seconds", [&] {
           nlohmann::json arr = nlohmann::json::array();
           for (const ProtectedCell& cell : cells)
             arr.push_back({{"block", cell.block},
                            {"seconds", cell.train_seconds}});
           return arr;
         }()},
    };
  }
  return j.dump(2) + "\n";
}

ProtectionReport ProtectionReport::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("schema_version").get<std::uint32_t>() != kSchemaVersion)
    throw std::runtime_error("unsupported report schema version");
  ProtectionReport r;
  const auto& cfg = j.at("config");
  r.epochs = cfg.at("epochs").get<std::uint32_t>();
  r.batch_size = cfg.at("batch_size").get<std::uint32_t>();
  r.max_lr = cfg.at("max_lr").get<float>();
  r.seed = cfg.at("seed").get<std::uint64_t>();
  r.train_size = cfg.at("train_size").get<std::uint32_t>();
  r.test_size = cfg.at("test_size").get<std::uint32_t>();
  r.architecture = cfg.at("architecture").get<std::string>();
  r.baseline_accuracy = j.at("baseline").at("accuracy").get<double>();
  for (const auto& c : j.at("models")) {
    ProtectedCell cell;
    cell.block = c.at("block").get<std::uint32_t>();
    cell.key_fingerprint = c.at("key_fingerprint").get<std::string>();
    cell.accuracy_correct = c.at("accuracy_correct").get<double>();
    cell.accuracy_forged = c.at("accuracy_forged").get<std::vector<double>>();
    cell.accuracy_forged_mean = c.at("accuracy_forged_mean").get<double>();
    cell.accuracy_plain = c.at("accuracy_plain").get<double>();
    for (const auto& a : c.at("attacks"))
      cell.attacks.push_back({a.at("subset_size").get<std::uint32_t>(),
                              a.at("epochs").get<std::uint32_t>(),
                              a.at("accuracy").get<double>()});
    cell.attack_monotone = c.at("attack_monotone").get<bool>();
    r.cells.push_back(std::move(cell));
  }
  return r;
}

}  // namespace keylock
