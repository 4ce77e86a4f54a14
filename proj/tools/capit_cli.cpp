// capit command-line entry point.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data or integrity
// error, 3 numeric abort.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "capit/config.hpp"
#include "capit/error.hpp"
#include "capit/eval.hpp"
#include "capit/experiment.hpp"
#include "capit/pairing.hpp"
#include "capit/png_io.hpp"
#include "capit/synthdata.hpp"
#include "capit/training.hpp"

namespace fs = std::filesystem;
using namespace capit;

namespace {

constexpr std::uint64_t kDefaultSeed = 0;

const std::vector<std::string> kSynthSections{"synth."};
const std::vector<std::string> kTrainSections{"train.", "loss.", "nce.", "mask.", "model.", "data."};

KeyValueConfig load_config(const std::string& path) {
  KeyValueConfig kv = path.empty() ? KeyValueConfig{} : KeyValueConfig::from_file(path);
  for (const auto& [key, value] : kv.entries()) {
    bool known = false;
    for (const auto* group : {&kSynthSections, &kTrainSections})
      for (const auto& p : *group) known = known || key.rfind(p, 0) == 0;
    if (!known) throw ConfigError("unknown config key '" + key + "'");
  }
  return kv;
}

void make_fresh_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string());
}

void print_echo(const std::string& command, const std::string& body) {
  std::cout << "# capit " << command << " resolved config\n" << body;
}

TrainConfig resolve_train_config(const std::string& config_path, std::optional<std::uint64_t> seed) {
  KeyValueConfig kv = load_config(config_path);
  TrainConfig cfg = TrainConfig::from_config(kv);
  kv.require_all_used(kTrainSections);
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

std::string echo_of(const TrainConfig& cfg) {
  std::ostringstream s;
  cfg.echo(s);
  return s.str();
}

// Source images of a dataset directory, or every PNG in a plain directory,
// keyed by file stem.
std::map<std::string, Image<double>> read_inputs(const fs::path& dir) {
  fs::path images = dir;
  if (fs::exists(dir / "manifest")) {
    const SynthDataset ds = load_dataset(dir.string());
    images = dir / "images" / ds.config.source_traversal;
  }
  if (!fs::is_directory(images)) throw IoError("input directory not found: " + images.string());
  std::map<std::string, Image<double>> out;
  for (const auto& e : fs::directory_iterator(images)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out[e.path().stem().string()] = read_image_png(e.path());
  }
  if (out.empty()) throw IoError("no PNG images in " + images.string());
  return out;
}

int cmd_synth(const std::string& config_path, const std::string& out, std::optional<std::uint64_t> seed) {
  KeyValueConfig kv = load_config(config_path);
  SynthConfig cfg = SynthConfig::from_config(kv);
  kv.require_all_used(kSynthSections);
  if (seed) cfg.seed = *seed;
  cfg.validate();
  std::ostringstream echo;
  cfg.echo(echo);
  print_echo("synth", echo.str());
  generate_dataset(cfg, out);
  std::cout << "dataset_hash = " << directory_hash(out) << '\n';
  return 0;
}

int cmd_pair(const std::string& source, const std::string& target, double max_dist, const std::string& out) {
  std::ostringstream echo;
  echo << "pair.source = " << source << '\n'
       << "pair.target = " << target << '\n'
       << "pair.max_distance = " << format_double(max_dist) << '\n';
  print_echo("pair", echo.str());
  const CoarsePairManifest m = pair_traversals(read_pose_log_file(source), read_pose_log_file(target), max_dist);
  if (fs::path(out).has_parent_path()) make_fresh_dir(fs::path(out).parent_path());
  write_manifest_file(out, m);
  std::cout << "pairs = " << m.pairs.size() << '\n';
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data, const std::string& out,
              std::optional<std::uint64_t> seed, const std::string& resume, int stop_after) {
  const TrainConfig cfg = resolve_train_config(config_path, seed);
  const std::string echo = echo_of(cfg);
  print_echo("train", echo);
  const SynthDataset ds = load_dataset(data);
  const DatasetSplit split = split_dataset(ds, cfg.max_pair_distance, cfg.train_fraction);
  const fs::path root(out);
  make_fresh_dir(root);
  {
    std::ofstream c(root / "config.txt");
    c << echo;
  }
  write_manifest_file((root / "pairs_train.txt").string(), split.train);
  write_manifest_file((root / "pairs_test.txt").string(), split.test);

  RunOptions opts;
  opts.out_dir = out;
  opts.dataset_hash = ds.hash;
  opts.resume_from = resume;
  opts.stop_after_epoch = stop_after;
  opts.on_epoch = [](const EpochRow& r) {
    std::cerr << "epoch " << r.epoch << " lr " << format_double(r.lr) << " total " << format_double(r.total)
              << '\n';
  };
  RunManifest manifest;
  run_training(training_pairs(ds, split.train, cfg), cfg, opts, &manifest);
  std::cout << "train_pairs = " << manifest.train_pairs << '\n';
  if (!manifest.checkpoints.empty()) std::cout << "checkpoint = " << (root / manifest.checkpoints.back()).string() << '\n';
  return 0;
}

int cmd_translate(const std::string& checkpoint, const std::string& in, const std::string& out) {
  const LoadedCheckpoint ck = load_training_checkpoint(checkpoint);
  std::ostringstream echo;
  echo << "translate.checkpoint = " << checkpoint << '\n'
       << "translate.in = " << in << '\n'
       << "translate.epoch = " << ck.epoch << '\n'
       << echo_of(ck.config);
  print_echo("translate", echo.str());
  const auto inputs = read_inputs(in);
  make_fresh_dir(out);
  for (const auto& [frame, image] : inputs) {
    write_image_png((fs::path(out) / (frame + ".png")).string(), translate_image(ck.models.G, image));
  }
  std::cout << "translated = " << inputs.size() << '\n';
  return 0;
}

int cmd_eval(const std::string& pred, const std::string& data, const std::string& report, std::uint64_t seed,
             int dim) {
  std::ostringstream echo;
  echo << "eval.pred = " << pred << '\n'
       << "eval.data = " << data << '\n'
       << "eval.embedder_seed = " << seed << '\n'
       << "eval.embedder_dim = " << dim << '\n';
  print_echo("eval", echo.str());
  const SynthDataset ds = load_dataset(data);
  const Embedder embedder(seed, dim);
  const MetricsReport rep = evaluate(ds, read_inputs(pred), embedder);
  if (fs::path(report).has_parent_path()) make_fresh_dir(fs::path(report).parent_path());
  std::ofstream f(report);
  if (!f) throw IoError("cannot write report " + report);
  rep.write(f);
  rep.write(std::cout);
  return 0;
}

int cmd_ablate(const std::string& preset, const std::string& config_path, const std::string& data,
               const std::string& out, std::optional<std::uint64_t> seed, int dim) {
  const TrainConfig base = resolve_train_config(config_path, seed);
  const std::vector<AblationArm> arms = ablation_preset(preset, base);
  std::ostringstream echo;
  echo << "ablate.preset = " << preset << '\n' << "ablate.arms = " << arms.size() << '\n' << echo_of(base);
  print_echo("ablate", echo.str());
  const SynthDataset ds = load_dataset(data);
  const Embedder embedder(base.seed, dim);
  make_fresh_dir(out);
  std::vector<ArmOutcome> outcomes;
  for (std::size_t k = 0; k < arms.size(); ++k) {
    std::cerr << "arm " << k << ": " << arms[k].label << '\n';
    const fs::path dir = fs::path(out) / ("arm" + std::to_string(k));
    make_fresh_dir(dir);
    std::ofstream(dir / "config.txt") << "# " << arms[k].label << '\n' << echo_of(arms[k].config);
    outcomes.push_back(run_arm(ds, arms[k], dir.string(), embedder));
  }
  std::ofstream f(fs::path(out) / "report.txt");
  if (!f) throw IoError("cannot write ablation report in " + out);
  write_ablation_report(f, preset, ds.hash, outcomes);
  write_ablation_report(std::cout, preset, ds.hash, outcomes);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coarsely-aligned paired image translation"};
  app.require_subcommand(1);

  std::string config, out, data, source, target, checkpoint, in, pred, report, preset, resume;
  std::uint64_t seed_value = kDefaultSeed;
  double max_dist = kDefaultMaxPairDistance;
  int stop_after = -1;
  int dim = 64;
  const std::string seed_help = "Seed for every stochastic component (default " + std::to_string(kDefaultSeed) +
                                ", or the config file's value)";

  auto* synth = app.add_subcommand("synth", "Generate a synthetic two-traversal dataset");
  synth->add_option("--config", config, "Config file (synth.* keys)")->check(CLI::ExistingFile);
  synth->add_option("--out", out, "Output dataset directory")->required();
  auto* synth_seed = synth->add_option("--seed", seed_value, seed_help);

  auto* pair = app.add_subcommand("pair", "Pair two pose logs by nearest GPS position");
  pair->add_option("--source", source, "Source traversal pose log")->required()->check(CLI::ExistingFile);
  pair->add_option("--target", target, "Target traversal pose log")->required()->check(CLI::ExistingFile);
  pair->add_option("--max-dist", max_dist, "Maximum pair distance in meters")->capture_default_str();
  pair->add_option("--out", out, "Output pair manifest")->required();

  auto* train = app.add_subcommand("train", "Train a translation model");
  train->add_option("--config", config, "Config file (train/loss/nce/mask/model/data keys)")->check(CLI::ExistingFile);
  train->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", out, "Run directory")->required();
  auto* train_seed = train->add_option("--seed", seed_value, seed_help);
  train->add_option("--resume", resume, "Resume from a checkpoint")->check(CLI::ExistingFile);
  train->add_option("--stop-after-epoch", stop_after, "Stop after this epoch (0-based)");

  auto* translate = app.add_subcommand("translate", "Translate images with a trained generator");
  translate->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  translate->add_option("--in", in, "Dataset directory or directory of PNGs")->required()->check(CLI::ExistingDirectory);
  translate->add_option("--out", out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "Score translated images");
  eval->add_option("--pred", pred, "Directory of translated PNGs named by source frame")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--report", report, "Metrics report path")->required();
  eval->add_option("--seed", seed_value, "Embedder seed")->capture_default_str();
  eval->add_option("--embedder-dim", dim, "Embedder feature size")->capture_default_str();

  auto* ablate = app.add_subcommand("ablate", "Run an ablation preset and tabulate the metrics");
  const auto names = ablation_preset_names();
  ablate->add_option("--preset", preset, "Preset name")->required()->check(CLI::IsMember(names));
  ablate->add_option("--config", config, "Base training config")->check(CLI::ExistingFile);
  ablate->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ablate->add_option("--out", out, "Output directory")->required();
  auto* ablate_seed = ablate->add_option("--seed", seed_value, seed_help);
  ablate->add_option("--embedder-dim", dim, "Embedder feature size")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  // The config file's seed applies when --seed is absent; with neither, the seed is kDefaultSeed.
  auto seed_from = [&](CLI::Option* opt) -> std::optional<std::uint64_t> {
    if (opt->count() > 0) return seed_value;
    return std::nullopt;
  };

  try {
    if (*synth) return cmd_synth(config, out, seed_from(synth_seed));
    if (*pair) return cmd_pair(source, target, max_dist, out);
    if (*train) return cmd_train(config, data, out, seed_from(train_seed), resume, stop_after);
    if (*translate) return cmd_translate(checkpoint, in, out);
    if (*eval) return cmd_eval(pred, data, report, seed_value, dim);
    if (*ablate) return cmd_ablate(preset, config, data, out, seed_from(ablate_seed), dim);
  } catch (const NumericAbort& e) {
    std::cerr << "numeric abort (batch " << e.batch_id() << "): " << e.what() << '\n';
    return 3;
  } catch (const InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
