#include "keylock/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include <CLI11.hpp>

#include "keylock/blockshuffle.hpp"
#include "keylock/dataio.hpp"
#include "keylock/keycore.hpp"
#include "keylock/nettrain.hpp"
#include "keylock/ppm.hpp"
#include "keylock/rng.hpp"

namespace keylock {

namespace {

namespace fs = std::filesystem;

std::string pct(double accuracy) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", accuracy * 100.0);
  return buf;
}

std::string pad_right(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

void cmd_keygen(const std::string& out_path, bool seeded, std::uint64_t seed,
                std::ostream& out) {
  const SecretKey key = seeded ? generate_key(seed) : generate_key();
  save_key_file(key, out_path);
  out << "wrote key " << key.fingerprint() << "... to " << out_path << '\n';
}

void cmd_keyspace(std::uint32_t channels, std::uint32_t block,
                  std::ostream& out) {
  const BigNat size = key_space_size(channels, block);
  out << size.to_string() << '\n';
  out << "digits: " << size.digit_count() << '\n';
}

void cmd_shuffle(const std::string& in_dir, const std::string& out_dir,
                 const std::string& key_path, std::uint32_t block, bool invert,
                 std::ostream& out) {
  const SecretKey key = load_key_file(key_path);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(in_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".ppm")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no .ppm files in " + in_dir);

  fs::create_directories(out_dir);
  std::size_t count = 0;
  for (const fs::path& file : files) {
    const ImageTensor img = read_ppm(file);
    const ShuffleConfig cfg{block, img.channels};
    const Permutation p = derive_permutation(key, cfg.vector_length());
    const ImageTensor result = invert ? unshuffle_image(img, cfg, p)
                                      : shuffle_image(img, cfg, p);
    write_ppm(fs::path(out_dir) / file.filename(), result);
    ++count;
  }
  out << (invert ? "unshuffled " : "shuffled ") << count << " images into "
      << out_dir << '\n';
}

struct TrainArgs {
  std::string data_dir, key_path, out_path;
  bool plain = false;
  ProtectionConfig cfg;
  std::uint32_t subset = 0;
};

void cmd_train(const TrainArgs& args, std::ostream& out) {
  auto [train, test] = load_cifar10(args.data_dir);
  (void)test;
  LabeledDataset pool = std::move(train);
  if (args.subset > 0 && args.subset < pool.size())
    pool = sample_subset(pool, args.subset, split_seed(args.cfg.seed, 3));

  Model model;
  std::uint32_t block = 0;
  std::string fingerprint;
  if (args.plain) {
    model = train_baseline(pool, args.cfg);
  } else {
    const SecretKey key = load_key_file(args.key_path);
    model = train_protected(pool, key, args.cfg);
    block = args.cfg.block;
    fingerprint = key.fingerprint();
  }
  save_checkpoint(model, args.out_path, block, fingerprint);
  out << "trained on " << pool.size() << " images ("
      << (args.plain ? std::string("plain")
                     : "M = " + std::to_string(args.cfg.block))
      << "), checkpoint: " << args.out_path << '\n';
}

void cmd_eval(const std::string& model_path, const std::string& data_dir,
              const std::string& key_path, bool plain, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(model_path);
  auto [train, test] = load_cifar10(data_dir);
  (void)train;

  ProtectionConfig cfg;
  cfg.arch = ckpt.model.arch;
  std::optional<SecretKey> key;
  if (!plain) {
    key = load_key_file(key_path);
    cfg.block = ckpt.block ? ckpt.block : cfg.block;
  }
  const double acc = evaluate(ckpt.model, test, key, cfg);
  out << "accuracy: " << pct(acc) << "% (" << acc << ")\n";
}

void cmd_attack(const std::string& model_path, const std::string& data_dir,
                std::uint64_t forge_seed, std::uint32_t subset,
                std::uint32_t epochs, const std::string& out_path,
                std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(model_path);
  auto [train, test] = load_cifar10(data_dir);

  ProtectionConfig cfg;
  cfg.arch = ckpt.model.arch;
  cfg.block = ckpt.block ? ckpt.block : cfg.block;
  cfg.seed = forge_seed;

  const SecretKey forged = generate_key(forge_seed);
  const LabeledDataset dprime =
      sample_subset(train, subset, split_seed(forge_seed, 1));
  const auto [adapted, acc] =
      finetune_attack(ckpt.model, dprime, test, forged, epochs, cfg);
  if (!out_path.empty())
    save_checkpoint(adapted, out_path, cfg.block, forged.fingerprint());
  out << "fine-tuning attack: |D'| = " << subset << ", " << epochs
      << " epochs, forged-key accuracy: " << pct(acc) << "%\n";
}

struct ProtocolArgs {
  std::string data_dir, out_path;
  ProtectionConfig cfg;
  std::vector<std::uint32_t> blocks = {4};
};

void cmd_protocol(ProtocolArgs args, std::ostream& out) {
  auto [train, test] = load_cifar10(args.data_dir);
  args.cfg.protocol_blocks = args.blocks;
  const ProtectionReport report = run_protocol(train, test, args.cfg);
  if (!args.out_path.empty()) {
    std::ofstream file(args.out_path, std::ios::trunc);
    if (!file) throw std::runtime_error("cannot write " + args.out_path);
    file << report.to_json();
  }
  out << render_report(report);
}

}  // namespace

std::string render_report(const ProtectionReport& report) {
  // attack columns: union of subset sizes across rows, ascending
  std::set<std::uint32_t> sizes;
  for (const ProtectedCell& cell : report.cells)
    for (const AttackResult& a : cell.attacks) sizes.insert(a.subset_size);

  std::vector<std::string> headers = {"Model", "Correct K", "Incorrect K'",
                                      "Plain"};
  for (std::uint32_t s : sizes)
    headers.push_back("Attack |D'|=" + std::to_string(s));

  std::vector<std::vector<std::string>> rows;
  for (const ProtectedCell& cell : report.cells) {
    std::vector<std::string> row = {
        "M = " + std::to_string(cell.block), pct(cell.accuracy_correct),
        cell.accuracy_forged.empty() ? "-" : pct(cell.accuracy_forged_mean),
        pct(cell.accuracy_plain)};
    for (std::uint32_t s : sizes) {
      const auto it = std::find_if(
          cell.attacks.begin(), cell.attacks.end(),
          [&](const AttackResult& a) { return a.subset_size == s; });
      row.push_back(it == cell.attacks.end() ? "-" : pct(it->accuracy));
    }
    rows.push_back(std::move(row));
  }
  std::vector<std::string> baseline_row = {
      "Baseline", pct(report.baseline_accuracy) + " (not protected)"};

  std::vector<std::size_t> widths(headers.size());
  for (std::size_t c = 0; c < headers.size(); ++c) widths[c] = headers[c].size();
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c)
      widths[c] = std::max(widths[c], row[c].size());
  widths[0] = std::max(widths[0], baseline_row[0].size());

  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << pad_right(row[c], widths[std::min(c, widths.size() - 1)]);
      if (c + 1 < row.size()) out << "  ";
    }
    out << '\n';
  };
  emit(headers);
  for (const auto& row : rows) emit(row);
  emit(baseline_row);
  return out.str();
}

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"keylock: key-based model protection via block-wise pixel "
               "shuffling"};
  app.require_subcommand(1);

  // keygen
  auto* keygen = app.add_subcommand("keygen", "generate a secret key file");
  std::string keygen_out;
  std::uint64_t keygen_seed = 0;
  keygen->add_option("--out", keygen_out, "output key file")->required();
  auto* seed_opt =
      keygen->add_option("--seed", keygen_seed, "deterministic seed");

  // keyspace
  auto* keyspace = app.add_subcommand(
      "keyspace", "print the exact key-space size (c*M*M)!");
  std::uint32_t ks_channels = 3, ks_block = 4;
  keyspace->add_option("--channels", ks_channels, "channel count")->required();
  keyspace->add_option("--block", ks_block, "block size M")->required();

  // shuffle
  auto* shuffle = app.add_subcommand(
      "shuffle", "shuffle (or unshuffle) a directory of PPM images");
  std::string sh_in, sh_out, sh_key;
  std::uint32_t sh_block = 4;
  bool sh_invert = false;
  shuffle->add_option("--in", sh_in, "input directory")->required();
  shuffle->add_option("--out", sh_out, "output directory")->required();
  shuffle->add_option("--key", sh_key, "key file")->required();
  shuffle->add_option("--block", sh_block, "block size M")->required();
  shuffle->add_flag("--invert", sh_invert, "apply the inverse transform");

  // train
  auto* train = app.add_subcommand("train", "train a protected model");
  TrainArgs train_args;
  train->add_option("--data", train_args.data_dir, "CIFAR-10 directory")
      ->required();
  auto* train_key = train->add_option("--key", train_args.key_path, "key file");
  auto* train_plain =
      train->add_flag("--plain", train_args.plain, "train on plain images");
  train->add_option("--block", train_args.cfg.block, "block size M");
  train->add_option("--out", train_args.out_path, "checkpoint path")
      ->required();
  train->add_option("--epochs", train_args.cfg.epochs, "training epochs");
  train->add_option("--batch", train_args.cfg.batch_size, "batch size");
  train->add_option("--max-lr", train_args.cfg.max_lr, "peak learning rate");
  train->add_option("--seed", train_args.cfg.seed, "master seed");
  train->add_option("--subset", train_args.subset,
                    "train on a seeded subset of this size");
  train_key->excludes(train_plain);
  train_plain->excludes(train_key);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_model, eval_data, eval_key;
  bool eval_plain = false;
  eval->add_option("--model", eval_model, "checkpoint path")->required();
  eval->add_option("--data", eval_data, "CIFAR-10 directory")->required();
  auto* eval_key_opt = eval->add_option("--key", eval_key, "key file");
  auto* eval_plain_opt =
      eval->add_flag("--plain", eval_plain, "evaluate on plain images");
  eval_key_opt->excludes(eval_plain_opt);
  eval_plain_opt->excludes(eval_key_opt);

  // attack
  auto* attack =
      app.add_subcommand("attack", "fine-tuning attack with a forged key");
  std::string atk_model, atk_data, atk_out;
  std::uint64_t atk_forge_seed = 0;
  std::uint32_t atk_subset = 1000, atk_epochs = 30;
  attack->add_option("--model", atk_model, "checkpoint path")->required();
  attack->add_option("--data", atk_data, "CIFAR-10 directory")->required();
  attack->add_option("--forge-seed", atk_forge_seed, "forged-key seed")
      ->required();
  attack->add_option("--subset", atk_subset, "adversary subset size |D'|")
      ->required();
  attack->add_option("--epochs", atk_epochs, "attack epochs");
  attack->add_option("--out", atk_out, "save the adapted checkpoint");

  // protocol
  auto* protocol = app.add_subcommand(
      "protocol", "run the full protection protocol and write a report");
  ProtocolArgs proto_args;
  bool no_timings = false;
  protocol->add_option("--data", proto_args.data_dir, "CIFAR-10 directory")
      ->required();
  protocol->add_option("--out", proto_args.out_path, "report JSON path")
      ->required();
  protocol->add_option("--blocks", proto_args.blocks,
                       "block sizes to train (one row each)");
  protocol->add_option("--epochs", proto_args.cfg.epochs, "training epochs");
  protocol->add_option("--batch", proto_args.cfg.batch_size, "batch size");
  protocol->add_option("--max-lr", proto_args.cfg.max_lr, "peak learning rate");
  protocol->add_option("--seed", proto_args.cfg.seed, "master seed");
  protocol->add_option("--train-subset", proto_args.cfg.train_subset,
                       "training subset size (0 = full)");
  protocol->add_option("--test-subset", proto_args.cfg.test_subset,
                       "test subset size (0 = full)");
  protocol->add_option("--forged-keys", proto_args.cfg.forged_keys,
                       "forged keys sampled for evaluation");
  protocol->add_option("--attack-sizes", proto_args.cfg.attack_sizes,
                       "adversary subset sizes");
  protocol->add_option("--attack-epochs", proto_args.cfg.attack_epochs,
                       "attack epochs");
  protocol->add_flag("--no-timings", no_timings,
                     "omit timings for byte-identical reruns");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return 1;
  }

  try {
    if (app.got_subcommand(keygen)) {
      cmd_keygen(keygen_out, seed_opt->count() > 0, keygen_seed, out);
    } else if (app.got_subcommand(keyspace)) {
      cmd_keyspace(ks_channels, ks_block, out);
    } else if (app.got_subcommand(shuffle)) {
      cmd_shuffle(sh_in, sh_out, sh_key, sh_block, sh_invert, out);
    } else if (app.got_subcommand(train)) {
      if (!train_args.plain && train_args.key_path.empty()) {
        err << "train requires --key or --plain\n";
        return 1;
      }
      cmd_train(train_args, out);
    } else if (app.got_subcommand(eval)) {
      if (!eval_plain && eval_key.empty()) {
        err << "eval requires --key or --plain\n";
        return 1;
      }
      cmd_eval(eval_model, eval_data, eval_key, eval_plain, out);
    } else if (app.got_subcommand(attack)) {
      cmd_attack(atk_model, atk_data, atk_forge_seed, atk_subset, atk_epochs,
                 atk_out, out);
    } else if (app.got_subcommand(protocol)) {
      proto_args.cfg.collect_timings = !no_timings;
      cmd_protocol(std::move(proto_args), out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace keylock
