#include "keylock/nettrain.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "keylock/engine.hpp"
#include "keylock/rng.hpp"

namespace keylock {

Architecture Architecture::desk_reference() {
  Architecture a;
  a.input_channels = 3;
  a.input_height = 32;
  a.input_width = 32;
  a.layers = {ConvSpec{3, 32, 3, 1},  ReluSpec{}, MaxPoolSpec{2},
              ConvSpec{32, 64, 3, 1}, ReluSpec{}, MaxPoolSpec{2},
              DenseSpec{4096, 256},   ReluSpec{}, DenseSpec{256, 10}};
  return a;
}

std::size_t Architecture::parameter_count() const {
  std::size_t total = 0;
  for (const LayerSpec& spec : layers) {
    if (const auto* conv = std::get_if<ConvSpec>(&spec))
      total += std::size_t(conv->out_channels) * conv->in_channels *
                   conv->kernel * conv->kernel +
               conv->out_channels;
    else if (const auto* dense = std::get_if<DenseSpec>(&spec))
      total += std::size_t(dense->outputs) * dense->inputs + dense->outputs;
  }
  return total;
}

std::string Architecture::describe() const {
  std::ostringstream out;
  out << "input " << input_channels << ' ' << input_height << ' '
      << input_width;
  for (const LayerSpec& spec : layers) {
    out << " | ";
    if (const auto* conv = std::get_if<ConvSpec>(&spec))
      out << "conv " << conv->in_channels << ' ' << conv->out_channels << ' '
          << conv->kernel << ' ' << conv->pad;
    else if (std::holds_alternative<ReluSpec>(spec))
      out << "relu";
    else if (const auto* pool = std::get_if<MaxPoolSpec>(&spec))
      out << "maxpool " << pool->window;
    else {
      const auto& dense = std::get<DenseSpec>(spec);
      out << "dense " << dense.inputs << ' ' << dense.outputs;
    }
  }
  return out.str();
}

Architecture Architecture::parse(const std::string& descriptor) {
  Architecture arch;
  arch.layers.clear();
  std::istringstream in(descriptor);
  std::string section;
  bool saw_input = false;
  while (std::getline(in, section, '|')) {
    std::istringstream tok(section);
    std::string kind;
    if (!(tok >> kind)) continue;
    auto want = [&](std::uint32_t& v) {
      if (!(tok >> v))
        throw std::invalid_argument("malformed architecture descriptor");
    };
    if (kind == "input") {
      want(arch.input_channels);
      want(arch.input_height);
      want(arch.input_width);
      saw_input = true;
    } else if (kind == "conv") {
      ConvSpec c{};
      want(c.in_channels);
      want(c.out_channels);
      want(c.kernel);
      want(c.pad);
      arch.layers.push_back(c);
    } else if (kind == "relu") {
      arch.layers.push_back(ReluSpec{});
    } else if (kind == "maxpool") {
      MaxPoolSpec p{};
      want(p.window);
      arch.layers.push_back(p);
    } else if (kind == "dense") {
      DenseSpec d{};
      want(d.inputs);
      want(d.outputs);
      arch.layers.push_back(d);
    } else {
      throw std::invalid_argument("unknown layer kind: " + kind);
    }
  }
  if (!saw_input || arch.layers.empty())
    throw std::invalid_argument("malformed architecture descriptor");
  arch.validate();
  return arch;
}

void Architecture::validate() const {
  // Engine construction walks the same shape chain; reuse its checks by
  // doing the walk here without buffers.
  std::uint32_t h = input_height, w = input_width, c = input_channels;
  if (h == 0 || w == 0 || c == 0)
    throw std::invalid_argument("empty input shape");
  for (const LayerSpec& spec : layers) {
    if (const auto* conv = std::get_if<ConvSpec>(&spec)) {
      if (conv->in_channels != c)
        throw std::invalid_argument("conv input channels mismatch");
      if (conv->kernel == 0 || conv->out_channels == 0)
        throw std::invalid_argument("degenerate conv spec");
      const std::int64_t oh = std::int64_t(h) + 2 * conv->pad - conv->kernel + 1;
      const std::int64_t ow = std::int64_t(w) + 2 * conv->pad - conv->kernel + 1;
      if (oh < 1 || ow < 1)
        throw std::invalid_argument("conv kernel larger than padded input");
      h = std::uint32_t(oh);
      w = std::uint32_t(ow);
      c = conv->out_channels;
    } else if (const auto* pool = std::get_if<MaxPoolSpec>(&spec)) {
      if (pool->window == 0 || h % pool->window || w % pool->window)
        throw std::invalid_argument("pool window does not divide input");
      h /= pool->window;
      w /= pool->window;
    } else if (const auto* dense = std::get_if<DenseSpec>(&spec)) {
      if (std::size_t(h) * w * c != dense->inputs)
        throw std::invalid_argument(
            "dense fan-in does not match flattened input");
      if (dense->outputs == 0)
        throw std::invalid_argument("degenerate dense spec");
      h = 1;
      w = 1;
      c = dense->outputs;
    }
  }
}

Model make_model(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  Model model;
  model.arch = arch;
  model.params.assign(arch.parameter_count(), 0.0f);
  Rng rng(seed);

  float* p = model.params.data();
  for (const LayerSpec& spec : arch.layers) {
    std::size_t weights = 0, biases = 0, fan_in = 0;
    if (const auto* conv = std::get_if<ConvSpec>(&spec)) {
      fan_in = std::size_t(conv->in_channels) * conv->kernel * conv->kernel;
      weights = std::size_t(conv->out_channels) * fan_in;
      biases = conv->out_channels;
    } else if (const auto* dense = std::get_if<DenseSpec>(&spec)) {
      fan_in = dense->inputs;
      weights = std::size_t(dense->outputs) * dense->inputs;
      biases = dense->outputs;
    } else {
      continue;
    }
    const float limit = std::sqrt(6.0f / float(fan_in));
    for (std::size_t i = 0; i < weights; ++i)
      *p++ = limit * (2.0f * rng.next_unit() - 1.0f);
    p += biases;  // biases stay zero
  }
  return model;
}

OptimState OptimState::for_model(const Model& model) {
  OptimState s;
  s.momentum.assign(model.params.size(), 0.0f);
  return s;
}

namespace {

template <class T>
std::vector<T> marshal_batch(const Architecture& arch, const Minibatch& batch) {
  for (const ImageTensor& img : batch.images)
    if (img.channels != arch.input_channels ||
        img.height != arch.input_height || img.width != arch.input_width)
      throw std::invalid_argument("batch image shape mismatch");
  if (batch.images.size() != batch.labels.size())
    throw std::invalid_argument("image/label count mismatch");

  const auto map = nhwc_marshal_map(arch.input_channels, arch.input_height,
                                    arch.input_width);
  std::vector<T> out(batch.size() * map.size());
  for (std::size_t b = 0; b < batch.size(); ++b)
    marshal_image(batch.images[b], map, out.data() + b * map.size());
  return out;
}

}  // namespace

std::vector<float> forward(const Model& model, const Minibatch& batch) {
  Engine<float> engine(model.arch, std::max<std::size_t>(batch.size(), 1));
  engine.load_params(model.params);
  const auto input = marshal_batch<float>(model.arch, batch);
  std::vector<float> logits(batch.size() * engine.output_size());
  if (!batch.images.empty())
    engine.forward(input.data(), batch.size(), logits.data());
  return logits;
}

double cross_entropy(std::span<const float> logits,
                     std::span<const std::uint8_t> labels) {
  if (labels.empty()) throw std::invalid_argument("empty batch");
  if (logits.size() % labels.size() != 0)
    throw std::invalid_argument("logit/label shape mismatch");
  const std::size_t classes = logits.size() / labels.size();
  double total = 0.0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const float* row = logits.data() + b * classes;
    if (labels[b] >= classes) throw std::invalid_argument("label out of range");
    double mx = row[0];
    for (std::size_t k = 1; k < classes; ++k) mx = std::max(mx, double(row[k]));
    double denom = 0.0;
    for (std::size_t k = 0; k < classes; ++k)
      denom += std::exp(double(row[k]) - mx);
    total += mx + std::log(denom) - double(row[labels[b]]);
  }
  return total / double(labels.size());
}

std::vector<float> backward(const Model& model, const Minibatch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("empty batch");
  Engine<float> engine(model.arch, batch.size());
  engine.load_params(model.params);
  const auto input = marshal_batch<float>(model.arch, batch);
  std::vector<float> grads(model.params.size());
  engine.forward_backward(input.data(), batch.size(), batch.labels.data(),
                          grads.data());
  return grads;
}

void sgd_step(Model& model, std::span<const float> grads, OptimState& state,
              float lr) {
  if (grads.size() != model.params.size() ||
      state.momentum.size() != model.params.size())
    throw std::invalid_argument("gradient shape mismatch");
  for (float g : grads)
    if (!std::isfinite(g)) throw std::runtime_error("diverged");

  float* p = model.params.data();
  float* buf = state.momentum.data();
  const float mu = state.momentum_coef, wd = state.weight_decay;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    buf[i] = mu * buf[i] + (grads[i] + wd * p[i]);
    p[i] -= lr * buf[i];
  }
}

double cyclic_lr(std::uint64_t step, std::uint64_t total_steps, double max_lr) {
  if (total_steps < 1) throw std::invalid_argument("empty schedule");
  if (step >= total_steps)
    throw std::invalid_argument("step beyond schedule end");
  const double peak = 0.45 * double(total_steps);
  const double s = double(step);
  if (s <= peak) return max_lr * (peak > 0.0 ? s / peak : 1.0);
  return max_lr * (double(total_steps) - s) / (double(total_steps) - peak);
}

double grad_check(const Model& model, const Minibatch& batch, double epsilon) {
  if (epsilon == 0.0) throw std::invalid_argument("degenerate step");
  if (batch.size() == 0) throw std::invalid_argument("empty batch");

  Engine<double> engine(model.arch, batch.size());
  const auto input = marshal_batch<double>(model.arch, batch);
  std::vector<double> params(model.params.begin(), model.params.end());

  engine.load_params(params);
  std::vector<double> analytic(params.size());
  engine.forward_backward(input.data(), batch.size(), batch.labels.data(),
                          analytic.data());

  // deterministic subsample, spread over every parameter group
  std::vector<std::pair<std::size_t, std::size_t>> groups;  // offset, count
  std::size_t offset = 0;
  for (const LayerSpec& spec : model.arch.layers) {
    std::size_t w = 0, b = 0;
    if (const auto* conv = std::get_if<ConvSpec>(&spec)) {
      w = std::size_t(conv->out_channels) * conv->in_channels * conv->kernel *
          conv->kernel;
      b = conv->out_channels;
    } else if (const auto* dense = std::get_if<DenseSpec>(&spec)) {
      w = std::size_t(dense->outputs) * dense->inputs;
      b = dense->outputs;
    } else {
      continue;
    }
    groups.emplace_back(offset, w);
    groups.emplace_back(offset + w, b);
    offset += w + b;
  }

  const std::size_t total = params.size();
  const std::size_t target = std::min<std::size_t>(total, 240);
  std::vector<std::size_t> picked;
  Rng rng(0x67726164636b31ULL);
  for (const auto& [goff, gcount] : groups) {
    std::size_t quota = std::max<std::size_t>(
        30, (target * gcount + total - 1) / total);
    quota = std::min(quota, gcount);
    // without replacement within the group
    std::vector<std::size_t> pool(gcount);
    for (std::size_t i = 0; i < gcount; ++i) pool[i] = goff + i;
    for (std::size_t i = 0; i < quota; ++i) {
      const std::size_t j = i + rng.next_below(std::uint32_t(gcount - i));
      std::swap(pool[i], pool[j]);
      picked.push_back(pool[i]);
    }
  }

  std::vector<double> logits(batch.size() * engine.output_size());
  auto loss_at = [&]() {
    engine.load_params(params);
    engine.forward(input.data(), batch.size(), logits.data());
    const std::size_t classes = engine.output_size();
    double total = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const double* row = logits.data() + b * classes;
      double mx = row[0];
      for (std::size_t k = 1; k < classes; ++k) mx = std::max(mx, row[k]);
      double denom = 0.0;
      for (std::size_t k = 0; k < classes; ++k) denom += std::exp(row[k] - mx);
      total += mx + std::log(denom) - row[batch.labels[b]];
    }
    return total / double(batch.size());
  };

  double worst = 0.0;
  for (std::size_t idx : picked) {
    const double saved = params[idx];
    params[idx] = saved + epsilon;
    const double up = loss_at();
    params[idx] = saved - epsilon;
    const double down = loss_at();
    params[idx] = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double a = analytic[idx];
    const double rel =
        std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    worst = std::max(worst, rel);
  }
  return worst;
}

namespace {

constexpr char kCheckpointMagic[4] = {'K', 'L', 'C', 'K'};

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {char(v), char(v >> 8), char(v >> 16), char(v >> 24)};
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(char(v >> (8 * i)));
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    const int c = in.get();
    v |= std::uint64_t(std::uint8_t(c)) << (8 * i);
  }
  return v;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     std::uint32_t block, const std::string& fingerprint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kCheckpointMagic, 4);
  put_u32(out, 1);  // format version
  put_u32(out, block);
  const std::string descriptor = model.arch.describe();
  put_u32(out, std::uint32_t(fingerprint.size()));
  out.write(fingerprint.data(), std::streamsize(fingerprint.size()));
  put_u32(out, std::uint32_t(descriptor.size()));
  out.write(descriptor.data(), std::streamsize(descriptor.size()));
  put_u64(out, model.params.size());
  static_assert(sizeof(float) == 4);
  for (float v : model.params) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
  }
  if (!out) throw std::runtime_error("short write: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  const std::uint32_t version = get_u32(in);
  if (version != 1)
    throw std::runtime_error("unsupported checkpoint version");
  Checkpoint ckpt;
  ckpt.block = get_u32(in);
  const std::uint32_t fp_len = get_u32(in);
  ckpt.fingerprint.resize(fp_len);
  in.read(ckpt.fingerprint.data(), fp_len);
  const std::uint32_t desc_len = get_u32(in);
  std::string descriptor(desc_len, '\0');
  in.read(descriptor.data(), desc_len);
  ckpt.model.arch = Architecture::parse(descriptor);
  const std::uint64_t count = get_u64(in);
  if (count != ckpt.model.arch.parameter_count())
    throw std::runtime_error("checkpoint parameter count mismatch");
  ckpt.model.params.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t bits = get_u32(in);
    std::memcpy(&ckpt.model.params[i], &bits, 4);
  }
  if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
  return ckpt;
}

}  // namespace keylock
