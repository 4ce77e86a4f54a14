#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "capit/checkpoint.hpp"
#include "capit/config.hpp"
#include "capit/losses.hpp"
#include "capit/masking.hpp"
#include "capit/models.hpp"
#include "capit/nn/adam.hpp"
#include "capit/synthdata.hpp"

namespace capit {

using TrainScalar = float;

struct LossToggles {
  bool use_mask = true;
  bool use_misalign = true;
  bool use_nce = true;
};

enum class MaskSource { proposals, exact };

struct TrainConfig {
  int epochs_constant = 50;
  int epochs_decay = 50;
  double lr = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int batch_size = 4;
  int checkpoint_every = 10;
  std::uint64_t seed = 0;

  ObjectiveWeights weights;
  WindowSpec window;
  NCEConfig nce;
  LossToggles toggles;

  MaskSource mask_source = MaskSource::proposals;
  double mask_threshold = kDefaultMaskThreshold;

  GeneratorSpec generator;
  int d_scales = 2;
  int d_base_channels = 32;
  int embed_dim = 64;
  std::vector<int> tap_layers;  // empty: stem + every downsample stage

  double max_pair_distance = kDefaultMaxPairDistance;
  double train_fraction = 0.8;

  int epochs() const { return epochs_constant + epochs_decay; }
  DiscriminatorSpec discriminator() const;
  FeatureExtractorSpec feature_extractor() const;

  void validate() const;  // ConfigError
  /// Reads train.*, loss.*, nce.*, mask.*, model.*, data.* keys over the defaults.
  static TrainConfig from_config(const KeyValueConfig& kv);
  void echo(std::ostream& out) const;
};

/// Constant for the first `epochs_constant` epochs, then linear towards 0:
/// lr * (epochs - epoch) / epochs_decay.
double lr_at(int epoch, const TrainConfig& cfg);

/// One coarse pair ready for training, with its joint background mask.
struct TrainingPair {
  std::string source_frame;
  std::string target_frame;
  Image<TrainScalar> source;
  Image<TrainScalar> target;
  BinaryMask mask;
};

struct DatasetSplit {
  CoarsePairManifest train;
  CoarsePairManifest test;
};

/// GPS pairing of the dataset's traversals followed by the location split.
DatasetSplit split_dataset(const SynthDataset& ds, double max_pair_distance, double train_fraction);

/// Builds masks from proposals at `mask_threshold` (or the exact sprite masks)
/// and joins them per pair. Pairs without background raise DegenerateInput.
std::vector<TrainingPair> training_pairs(const SynthDataset& ds, const CoarsePairManifest& pairs,
                                         const TrainConfig& cfg);

struct ModelBundle {
  Generator<TrainScalar> G;
  Discriminator<TrainScalar> D;
  FeatureExtractor<TrainScalar> H;
  nn::AdamState<TrainScalar> opt_g;
  nn::AdamState<TrainScalar> opt_d;
  nn::AdamState<TrainScalar> opt_h;

  /// Fresh models; G, D and H draw from seeds derived from cfg.seed.
  static ModelBundle create(const TrainConfig& cfg);
};

struct StepReport {
  LossTerms<double> terms;
  double generator_grad_norm = 0.0;
};

/// One D update on the discriminator_batch inputs, then one joint G+H update
/// on the objective. `realB_prime` is used by the unpaired mode only.
/// Non-finite losses or gradients raise NumericAbort carrying `batch_id`.
StepReport train_step(std::span<const TrainingPair* const> batch,
                      std::span<const Image<TrainScalar>* const> realB_prime, ModelBundle& models,
                      const TrainConfig& cfg, double lr, std::mt19937_64& rng, long long batch_id);

struct EpochRow {
  int epoch = 0;
  double lr = 0;
  double gan_d = 0;
  double gan_g = 0;
  double l1 = 0;
  double nce = 0;
  double total = 0;

  bool operator==(const EpochRow&) const = default;
};

struct RunManifest {
  std::string config_echo;
  std::string dataset_hash;
  long long generator_params = 0;
  long long discriminator_params = 0;
  long long head_params = 0;
  int train_pairs = 0;
  std::vector<EpochRow> rows;
  std::vector<std::string> checkpoints;  // relative to the run directory

  void write(std::ostream& out) const;
  static RunManifest read(std::istream& in);
};

struct RunOptions {
  std::string out_dir;
  std::string dataset_hash;
  std::string resume_from;   // checkpoint path; empty for a fresh run
  int stop_after_epoch = -1;  // stop (with a checkpoint) after this epoch; -1 runs to the end
  std::function<void(const EpochRow&)> on_epoch;
};

/// Full schedule with checkpoints every `checkpoint_every` epochs and at the
/// end. Writes `run_manifest.txt` (deterministic) and `timing.txt`
/// (wall-clock) into out_dir and returns the trained models.
ModelBundle run_training(const std::vector<TrainingPair>& pairs, const TrainConfig& cfg, const RunOptions& options,
                         RunManifest* manifest = nullptr);

CheckpointData make_checkpoint(const ModelBundle& models, const TrainConfig& cfg, int epoch,
                               const std::vector<EpochRow>& rows);
/// Restores config, models (with optimiser state), completed epoch and history.
struct LoadedCheckpoint {
  TrainConfig config;
  ModelBundle models;
  int epoch = -1;
  std::vector<EpochRow> rows;
};
LoadedCheckpoint load_training_checkpoint(const std::string& path);

struct AblationArm {
  std::string label;
  TrainConfig config;
};

/// Presets: row1..row5 (loss-term ablation), window (k = 1, 3, 5),
/// mask-threshold (0.9 .. 0.1), gan-mode (conditional, paired, unpaired).
std::vector<AblationArm> ablation_preset(const std::string& name, const TrainConfig& base);
std::vector<std::string> ablation_preset_names();

}  // namespace capit
