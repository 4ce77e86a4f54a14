#include "capit/training.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <istream>
#include <ostream>
#include <sstream>

#include "capit/patchnce.hpp"
#include "capit/text.hpp"

namespace capit {

namespace fs = std::filesystem;
using T = TrainScalar;

// ---------------------------------------------------------------------------
// Configuration

DiscriminatorSpec TrainConfig::discriminator() const {
  DiscriminatorSpec d;
  d.scales = d_scales;
  d.base_channels = d_base_channels;
  d.image_channels = generator.out_channels;
  d.conditioning_channels = weights.gan_mode == GanMode::conditional ? generator.in_channels : 0;
  return d;
}

FeatureExtractorSpec TrainConfig::feature_extractor() const {
  FeatureExtractorSpec h = FeatureExtractorSpec::all_layers(generator, embed_dim);
  if (!tap_layers.empty()) h.tap_layers = tap_layers;
  return h;
}

void TrainConfig::validate() const {
  CAPIT_REQUIRE(epochs_constant >= 0 && epochs_decay >= 0 && epochs() >= 1, ConfigError,
                "train: need at least one epoch");
  CAPIT_REQUIRE(lr > 0, ConfigError, "train: lr must be positive");
  CAPIT_REQUIRE(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1, ConfigError,
                "train: Adam betas must lie in [0, 1)");
  CAPIT_REQUIRE(batch_size >= 1, ConfigError, "train: batch_size must be >= 1");
  CAPIT_REQUIRE(checkpoint_every >= 1, ConfigError, "train: checkpoint_every must be >= 1");
  CAPIT_REQUIRE(weights.lambda_l1 >= 0 && weights.lambda_nce >= 0, ConfigError, "loss: weights must be >= 0");
  CAPIT_REQUIRE(window.k_h >= 0 && window.k_w >= 0, ConfigError, "loss: window half-sizes must be >= 0");
  CAPIT_REQUIRE(nce.temperature > 0 && nce.patches_per_layer >= 2, ConfigError,
                "nce: temperature must be positive and patches_per_layer >= 2");
  CAPIT_REQUIRE(nce.keep_fraction > 0 && nce.keep_fraction <= 1, ConfigError, "nce: keep_fraction not in (0, 1]");
  CAPIT_REQUIRE(mask_threshold >= 0 && mask_threshold <= 1, ConfigError, "mask: threshold not in [0, 1]");
  CAPIT_REQUIRE(generator.base_channels > 0 && generator.downsample_stages > 0 && generator.residual_blocks >= 0,
                ConfigError, "model: invalid generator size");
  CAPIT_REQUIRE(d_scales >= 1 && d_base_channels >= 1 && embed_dim >= 1, ConfigError,
                "model: invalid discriminator or head size");
  for (int l : tap_layers)
    CAPIT_REQUIRE(l >= 0 && l <= generator.downsample_stages, ConfigError, "nce: tap layer out of range");
  CAPIT_REQUIRE(max_pair_distance > 0, ConfigError, "data: max_pair_distance must be positive");
  CAPIT_REQUIRE(train_fraction > 0 && train_fraction <= 1, ConfigError, "data: train_fraction not in (0, 1]");
}

namespace {

MaskSource parse_mask_source(const std::string& s) {
  if (s == "proposals") return MaskSource::proposals;
  if (s == "exact") return MaskSource::exact;
  throw ConfigError("unknown mask source '" + s + "' (proposals|exact)");
}

const char* to_string(MaskSource m) { return m == MaskSource::proposals ? "proposals" : "exact"; }

}  // namespace

TrainConfig TrainConfig::from_config(const KeyValueConfig& kv) {
  TrainConfig c;
  c.epochs_constant = kv.get("train.epochs_constant", c.epochs_constant);
  c.epochs_decay = kv.get("train.epochs_decay", c.epochs_decay);
  c.lr = kv.get("train.lr", c.lr);
  c.adam_beta1 = kv.get("train.adam_beta1", c.adam_beta1);
  c.adam_beta2 = kv.get("train.adam_beta2", c.adam_beta2);
  c.batch_size = kv.get("train.batch_size", c.batch_size);
  c.checkpoint_every = kv.get("train.checkpoint_every", c.checkpoint_every);
  c.seed = static_cast<std::uint64_t>(kv.get("train.seed", static_cast<long long>(c.seed)));

  c.weights.lambda_l1 = kv.get("loss.lambda_l1", c.weights.lambda_l1);
  c.weights.lambda_nce = kv.get("loss.lambda_nce", c.weights.lambda_nce);
  try {
    c.weights.gan_mode = parse_gan_mode(kv.get("loss.gan_mode", to_string(c.weights.gan_mode)));
    c.weights.gan_form = parse_gan_form(kv.get("loss.gan_form", to_string(c.weights.gan_form)));
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  c.window.k_h = kv.get("loss.window_kh", c.window.k_h);
  c.window.k_w = kv.get("loss.window_kw", c.window.k_w);
  c.toggles.use_mask = kv.get("loss.use_mask", c.toggles.use_mask);
  c.toggles.use_misalign = kv.get("loss.use_misalign", c.toggles.use_misalign);
  c.toggles.use_nce = kv.get("loss.use_nce", c.toggles.use_nce);

  c.nce.temperature = kv.get("nce.temperature", c.nce.temperature);
  c.nce.patches_per_layer = kv.get("nce.patches_per_layer", c.nce.patches_per_layer);
  c.nce.normalize_features = kv.get("nce.normalize", c.nce.normalize_features);
  c.nce.keep_fraction = kv.get("nce.keep_fraction", c.nce.keep_fraction);
  c.tap_layers = kv.get("nce.tap_layers", c.tap_layers);
  c.embed_dim = kv.get("nce.embed_dim", c.embed_dim);

  c.mask_source = parse_mask_source(kv.get("mask.source", std::string(to_string(c.mask_source))));
  c.mask_threshold = kv.get("mask.threshold", c.mask_threshold);

  c.generator.base_channels = kv.get("model.base_channels", c.generator.base_channels);
  c.generator.downsample_stages = kv.get("model.downsample_stages", c.generator.downsample_stages);
  c.generator.residual_blocks = kv.get("model.residual_blocks", c.generator.residual_blocks);
  c.d_scales = kv.get("model.d_scales", c.d_scales);
  c.d_base_channels = kv.get("model.d_base_channels", c.d_base_channels);

  c.max_pair_distance = kv.get("data.max_pair_distance", c.max_pair_distance);
  c.train_fraction = kv.get("data.train_fraction", c.train_fraction);

  c.nce.layers = static_cast<int>(c.feature_extractor().tap_layers.size());
  c.validate();
  return c;
}

void TrainConfig::echo(std::ostream& out) const {
  const auto taps = feature_extractor().tap_layers;
  out << "train.epochs_constant = " << epochs_constant << '\n'
      << "train.epochs_decay = " << epochs_decay << '\n'
      << "train.lr = " << format_double(lr) << '\n'
      << "train.adam_beta1 = " << format_double(adam_beta1) << '\n'
      << "train.adam_beta2 = " << format_double(adam_beta2) << '\n'
      << "train.batch_size = " << batch_size << '\n'
      << "train.checkpoint_every = " << checkpoint_every << '\n'
      << "train.seed = " << seed << '\n'
      << "loss.lambda_l1 = " << format_double(weights.lambda_l1) << '\n'
      << "loss.lambda_nce = " << format_double(weights.lambda_nce) << '\n'
      << "loss.gan_mode = " << to_string(weights.gan_mode) << '\n'
      << "loss.gan_form = " << to_string(weights.gan_form) << '\n'
      << "loss.window_kh = " << window.k_h << '\n'
      << "loss.window_kw = " << window.k_w << '\n'
      << "loss.use_mask = " << (toggles.use_mask ? "true" : "false") << '\n'
      << "loss.use_misalign = " << (toggles.use_misalign ? "true" : "false") << '\n'
      << "loss.use_nce = " << (toggles.use_nce ? "true" : "false") << '\n'
      << "nce.temperature = " << format_double(nce.temperature) << '\n'
      << "nce.patches_per_layer = " << nce.patches_per_layer << '\n'
      << "nce.normalize = " << (nce.normalize_features ? "true" : "false") << '\n'
      << "nce.keep_fraction = " << format_double(nce.keep_fraction) << '\n'
      << "nce.tap_layers = " << format_list(taps) << '\n'
      << "nce.embed_dim = " << embed_dim << '\n'
      << "mask.source = " << to_string(mask_source) << '\n'
      << "mask.threshold = " << format_double(mask_threshold) << '\n'
      << "model.base_channels = " << generator.base_channels << '\n'
      << "model.downsample_stages = " << generator.downsample_stages << '\n'
      << "model.residual_blocks = " << generator.residual_blocks << '\n'
      << "model.d_scales = " << d_scales << '\n'
      << "model.d_base_channels = " << d_base_channels << '\n'
      << "data.max_pair_distance = " << format_double(max_pair_distance) << '\n'
      << "data.train_fraction = " << format_double(train_fraction) << '\n';
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs()) {
    throw InvalidInput("lr_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs()) +
                       ")");
  }
  if (epoch < cfg.epochs_constant) return cfg.lr;
  return cfg.lr * static_cast<double>(cfg.epochs() - epoch) / static_cast<double>(cfg.epochs_decay);
}

// ---------------------------------------------------------------------------
// Data

DatasetSplit split_dataset(const SynthDataset& ds, double max_pair_distance, double train_fraction) {
  const CoarsePairManifest all = pair_traversals(ds.source_poses, ds.target_poses, max_pair_distance);
  if (train_fraction >= 1.0) return {all, CoarsePairManifest{all.source_traversal, all.target_traversal,
                                                             all.max_distance, {}}};
  auto [train, test] = split_by_location(all, ds.source_poses, train_fraction);
  return {std::move(train), std::move(test)};
}

std::vector<TrainingPair> training_pairs(const SynthDataset& ds, const CoarsePairManifest& pairs,
                                         const TrainConfig& cfg) {
  std::map<std::string, const SynthPairRecord*> by_source, by_target;
  for (const auto& r : ds.records) {
    by_source[r.source_frame] = &r;
    by_target[r.target_frame] = &r;
  }
  std::vector<TrainingPair> out;
  for (const auto& p : pairs.pairs) {
    const auto s = by_source.find(p.source_frame);
    const auto t = by_target.find(p.target_frame);
    if (s == by_source.end() || t == by_target.end()) {
      throw IntegrityError("pair references unknown frame " + p.source_frame + " / " + p.target_frame);
    }
    const SynthPairRecord& src = *s->second;
    const SynthPairRecord& tgt = *t->second;
    BinaryMask ms, mt;
    if (cfg.mask_source == MaskSource::exact) {
      ms = src.source_mask;
      mt = tgt.target_mask;
    } else {
      ms = build_foreground_mask(src.source_proposals, cfg.mask_threshold);
      mt = build_foreground_mask(tgt.target_proposals, cfg.mask_threshold);
    }
    TrainingPair tp{p.source_frame, p.target_frame, src.source.cast<T>(), tgt.target.cast<T>(),
                    joint_background(ms, mt)};
    if (tp.mask.background_count() == 0) {
      throw DegenerateInput("pair " + p.source_frame + " / " + p.target_frame + " has no joint background");
    }
    out.push_back(std::move(tp));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Models and one optimisation step

ModelBundle ModelBundle::create(const TrainConfig& cfg) {
  ModelBundle m;
  m.G = Generator<T>(cfg.generator, cfg.seed * 4 + 1);
  m.D = Discriminator<T>(cfg.discriminator(), cfg.seed * 4 + 2);
  m.H = FeatureExtractor<T>(cfg.feature_extractor(), cfg.generator, cfg.seed * 4 + 3);
  m.opt_g = nn::AdamState<T>::for_params(m.G.params);
  m.opt_d = nn::AdamState<T>::for_params(m.D.params);
  m.opt_h = nn::AdamState<T>::for_params(m.H.params);
  return m;
}

namespace {

void require_finite(double v, const char* what, long long batch_id) {
  if (!std::isfinite(v)) {
    throw NumericAbort(std::string("non-finite ") + what + " in batch " + std::to_string(batch_id), batch_id);
  }
}

bool maps_finite(const std::vector<Image<T>>& maps) {
  for (const auto& m : maps)
    if (!m.data.allFinite()) return false;
  return true;
}

}  // namespace

StepReport train_step(std::span<const TrainingPair* const> batch,
                      std::span<const Image<TrainScalar>* const> realB_prime, ModelBundle& models,
                      const TrainConfig& cfg, double lr, std::mt19937_64& rng, long long batch_id) {
  CAPIT_REQUIRE(!batch.empty(), InvalidInput, "train_step: empty batch");
  const std::size_t B = batch.size();
  const T inv_b = T(1) / static_cast<T>(B);
  const GanForm form = cfg.weights.gan_form;
  const int scales = models.D.spec.scales;
  const T inv_s = T(1) / static_cast<T>(scales);
  const nn::AdamConfig adam{cfg.adam_beta1, cfg.adam_beta2, 1e-8};
  StepReport report;
  auto& terms = report.terms;

  // Generator outputs, kept with their traces for the G update.
  std::vector<Image<T>> realA, realB, prime, fake(B);
  std::vector<nn::Trace<T>> g_traces(B);
  for (std::size_t n = 0; n < B; ++n) {
    realA.push_back(batch[n]->source);
    realB.push_back(batch[n]->target);
    fake[n] = models.G.forward(batch[n]->source, &g_traces[n]);
  }
  for (const auto* p : realB_prime) prime.push_back(*p);
  if (cfg.weights.gan_mode == GanMode::unpaired && prime.size() != B) {
    throw InvalidInput("train_step: unpaired mode needs one realB' per pair");
  }

  // --- D update
  {
    const auto dbatch = discriminator_batch<T>(cfg.weights.gan_mode, realA, realB, prime, fake);
    auto grads = models.D.params.zeros_like();
    double loss = 0;
    for (std::size_t n = 0; n < B; ++n) {
      DiscriminatorTrace<T> tr, tf;
      const auto mr = models.D.forward(dbatch.real[n], &tr);
      const auto mf = models.D.forward(dbatch.fake[n], &tf);
      if (!maps_finite(mr) || !maps_finite(mf)) require_finite(NAN, "discriminator output", batch_id);
      std::vector<Image<T>> gr(scales), gf(scales);
      for (int s = 0; s < scales; ++s) {
        Matrix<T> dr, df;
        loss += gan_d_descent<T>(mr[s].data, mf[s].data, form, &dr, &df) * inv_s * inv_b;
        gr[s] = Image<T>(mr[s].height, mr[s].width, Matrix<T>(dr * (inv_s * inv_b)));
        gf[s] = Image<T>(mf[s].height, mf[s].width, Matrix<T>(df * (inv_s * inv_b)));
      }
      models.D.backward(tr, gr, &grads, false);
      models.D.backward(tf, gf, &grads, false);
    }
    require_finite(loss, "discriminator loss", batch_id);
    if (!grads.all_finite()) require_finite(NAN, "discriminator gradient", batch_id);
    nn::adam_step(models.D.params, grads, models.opt_d, lr, adam);
    terms.gan_d = loss;
  }

  // --- G + H update
  auto g_grads = models.G.params.zeros_like();
  auto h_grads = models.H.params.zeros_like();
  auto enc_grads = models.G.params.zeros_like();
  const T lambda_l1 = static_cast<T>(cfg.weights.lambda_l1);
  const T lambda_nce = static_cast<T>(cfg.weights.lambda_nce);
  const bool conditioned = cfg.weights.gan_mode == GanMode::conditional;
  NCEConfig nce_cfg = cfg.nce;
  nce_cfg.layers = models.H.layers();
  double gan_g = 0, l1 = 0, nce = 0;
  for (std::size_t n = 0; n < B; ++n) {
    const Image<T> d_in = conditioned ? concat_channels(realA[n], fake[n]) : fake[n];
    DiscriminatorTrace<T> tf;
    const auto mf = models.D.forward(d_in, &tf);
    if (!maps_finite(mf)) require_finite(NAN, "discriminator output", batch_id);
    std::vector<Image<T>> gf(scales);
    for (int s = 0; s < scales; ++s) {
      Matrix<T> df;
      gan_g += gan_g_descent<T>(mf[s].data, form, &df) * inv_s * inv_b;
      gf[s] = Image<T>(mf[s].height, mf[s].width, Matrix<T>(df * (inv_s * inv_b)));
    }
    Image<T> dfake = models.D.backward(tf, gf, nullptr, true);
    if (conditioned) dfake = Image<T>(dfake.height, dfake.width, Matrix<T>(dfake.data.bottomRows(fake[n].channels())));

    const BinaryMask& mask = batch[n]->mask;
    Image<T> dl1;
    T l1_n;
    if (cfg.toggles.use_mask && cfg.toggles.use_misalign) {
      l1_n = l1_star<T>(fake[n], realB[n], mask, cfg.window, &dl1);
    } else if (cfg.toggles.use_mask) {
      l1_n = l1_masked<T>(fake[n], realB[n], mask, &dl1);
    } else if (cfg.toggles.use_misalign) {
      l1_n = l1_misalign<T>(fake[n], realB[n], cfg.window, &dl1);
    } else {
      l1_n = l1_plain<T>(fake[n], realB[n], &dl1);
    }
    l1 += l1_n * inv_b;
    dfake.data += (lambda_l1 * inv_b) * dl1.data;

    if (cfg.toggles.use_nce) {
      const BinaryMask nce_mask =
          cfg.toggles.use_mask ? mask : BinaryMask::all_background(fake[n].height, fake[n].width);
      PatchNceGrads<T> pg{{}, &enc_grads, &h_grads};
      nce += patchnce_star<T>(fake[n], realB[n], models.G, models.H, nce_mask, nce_cfg, &rng, &pg) * inv_b;
      dfake.data += (lambda_nce * inv_b) * pg.gen.data;
    }
    models.G.backward(g_traces[n], dfake, &g_grads);
  }
  // NCE parameter gradients were accumulated unscaled.
  enc_grads *= lambda_nce * inv_b;
  h_grads *= lambda_nce * inv_b;
  g_grads += enc_grads;

  terms.gan_g = gan_g;
  terms.l1 = l1;
  terms.nce = nce;
  terms.total = capit_objective<double>(gan_g, l1, nce, cfg.weights);
  require_finite(terms.total, "generator objective", batch_id);
  if (!g_grads.all_finite() || !h_grads.all_finite()) require_finite(NAN, "generator gradient", batch_id);
  report.generator_grad_norm = std::sqrt(static_cast<double>(g_grads.squared_norm()));
  nn::adam_step(models.G.params, g_grads, models.opt_g, lr, adam);
  if (cfg.toggles.use_nce) nn::adam_step(models.H.params, h_grads, models.opt_h, lr, adam);
  return report;
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

constexpr const char* kRunTag = "# capit-run v1";
constexpr const char* kRowHeader = "# epoch, lr, uGAN_d, uGAN_g, l1_star, nce, total";

std::string row_text(const EpochRow& r) {
  return std::to_string(r.epoch) + ", " + format_double(r.lr) + ", " + format_double(r.gan_d) + ", " +
         format_double(r.gan_g) + ", " + format_double(r.l1) + ", " + format_double(r.nce) + ", " +
         format_double(r.total);
}

EpochRow parse_row(const std::string& text) {
  const auto f = split(text, ',');
  if (f.size() != 7) throw IntegrityError("bad epoch row: " + text);
  EpochRow r;
  r.epoch = static_cast<int>(parse_int(f[0]));
  r.lr = parse_double(f[1]);
  r.gan_d = parse_double(f[2]);
  r.gan_g = parse_double(f[3]);
  r.l1 = parse_double(f[4]);
  r.nce = parse_double(f[5]);
  r.total = parse_double(f[6]);
  return r;
}

}  // namespace

void RunManifest::write(std::ostream& out) const {
  out << kRunTag << '\n' << "# config\n" << config_echo;
  out << "run.dataset_hash = " << dataset_hash << '\n'
      << "run.train_pairs = " << train_pairs << '\n'
      << "run.generator_params = " << generator_params << '\n'
      << "run.discriminator_params = " << discriminator_params << '\n'
      << "run.head_params = " << head_params << '\n';
  for (const auto& c : checkpoints) out << "run.checkpoint = " << c << '\n';
  out << kRowHeader << '\n';
  for (const auto& r : rows) out << row_text(r) << '\n';
}

RunManifest RunManifest::read(std::istream& in) {
  RunManifest m;
  std::string line;
  if (!std::getline(in, line) || trim(line) != kRunTag) throw IntegrityError("bad run manifest tag");
  std::ostringstream echo;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      m.rows.push_back(parse_row(t));
      continue;
    }
    const std::string key = trim(t.substr(0, eq)), value = trim(t.substr(eq + 1));
    if (key == "run.dataset_hash") {
      m.dataset_hash = value;
    } else if (key == "run.train_pairs") {
      m.train_pairs = static_cast<int>(parse_int(value));
    } else if (key == "run.generator_params") {
      m.generator_params = parse_int(value);
    } else if (key == "run.discriminator_params") {
      m.discriminator_params = parse_int(value);
    } else if (key == "run.head_params") {
      m.head_params = parse_int(value);
    } else if (key == "run.checkpoint") {
      m.checkpoints.push_back(value);
    } else {
      echo << key << " = " << value << '\n';
    }
  }
  m.config_echo = echo.str();
  return m;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void add_store(CheckpointData& d, const std::string& prefix, const nn::ParamStore<T>& p) {
  for (int k = 0; k < p.size(); ++k) d.blobs.emplace_back(prefix + p.name(k), p[k]);
}

void restore_store(const CheckpointData& d, const std::string& prefix, nn::ParamStore<T>& p) {
  for (int k = 0; k < p.size(); ++k) {
    const Matrix<float>& m = d.blob(prefix + p.name(k));
    if (m.rows() != p[k].rows() || m.cols() != p[k].cols()) {
      throw IntegrityError("checkpoint blob " + prefix + p.name(k) + " has the wrong shape");
    }
    p[k] = m;
  }
}

}  // namespace

CheckpointData make_checkpoint(const ModelBundle& models, const TrainConfig& cfg, int epoch,
                               const std::vector<EpochRow>& rows) {
  CheckpointData d;
  std::stringstream echo;
  cfg.echo(echo);
  std::string line;
  while (std::getline(echo, line)) {
    const auto eq = line.find(" = ");
    d.header["config." + line.substr(0, eq)] = line.substr(eq + 3);
  }
  d.header["state.epoch"] = std::to_string(epoch);
  d.header["state.adam_g_step"] = std::to_string(models.opt_g.step);
  d.header["state.adam_d_step"] = std::to_string(models.opt_d.step);
  d.header["state.adam_h_step"] = std::to_string(models.opt_h.step);
  d.header["state.d_conditioning_channels"] = std::to_string(models.D.spec.conditioning_channels);
  for (const auto& r : rows) {
    std::ostringstream key;
    key << "history." << std::setw(6) << std::setfill('0') << r.epoch;
    d.header[key.str()] = row_text(r);
  }
  add_store(d, "G/", models.G.params);
  add_store(d, "D/", models.D.params);
  add_store(d, "H/", models.H.params);
  add_store(d, "adam_g.m/", models.opt_g.first);
  add_store(d, "adam_g.v/", models.opt_g.second);
  add_store(d, "adam_d.m/", models.opt_d.first);
  add_store(d, "adam_d.v/", models.opt_d.second);
  add_store(d, "adam_h.m/", models.opt_h.first);
  add_store(d, "adam_h.v/", models.opt_h.second);
  return d;
}

LoadedCheckpoint load_training_checkpoint(const std::string& path) {
  const CheckpointData d = read_checkpoint(path);
  KeyValueConfig kv;
  LoadedCheckpoint out;
  try {
    for (const auto& [k, v] : d.header)
      if (k.rfind("config.", 0) == 0) kv.set(k.substr(7), v);
    out.config = TrainConfig::from_config(kv);
    kv.require_all_used();
    auto state = [&](const std::string& key) {
      const auto it = d.header.find(key);
      if (it == d.header.end()) throw IntegrityError("checkpoint lacks " + key);
      return parse_int(it->second);
    };
    out.epoch = static_cast<int>(state("state.epoch"));
    out.models = ModelBundle::create(out.config);
    out.models.opt_g.step = state("state.adam_g_step");
    out.models.opt_d.step = state("state.adam_d_step");
    out.models.opt_h.step = state("state.adam_h_step");
    for (const auto& [k, v] : d.header)
      if (k.rfind("history.", 0) == 0) out.rows.push_back(parse_row(v));
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("checkpoint config: ") + e.what());
  } catch (const InvalidInput& e) {
    throw IntegrityError(std::string("checkpoint state: ") + e.what());
  }
  restore_store(d, "G/", out.models.G.params);
  restore_store(d, "D/", out.models.D.params);
  restore_store(d, "H/", out.models.H.params);
  restore_store(d, "adam_g.m/", out.models.opt_g.first);
  restore_store(d, "adam_g.v/", out.models.opt_g.second);
  restore_store(d, "adam_d.m/", out.models.opt_d.first);
  restore_store(d, "adam_d.v/", out.models.opt_d.second);
  restore_store(d, "adam_h.m/", out.models.opt_h.first);
  restore_store(d, "adam_h.v/", out.models.opt_h.second);
  return out;
}

// ---------------------------------------------------------------------------
// Run loop

namespace {

std::mt19937_64 epoch_rng(std::uint64_t seed, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x7a11u};
  return std::mt19937_64(seq);
}

std::string checkpoint_name(int epoch) {
  std::ostringstream s;
  s << "checkpoints/epoch_" << std::setw(4) << std::setfill('0') << epoch << ".ckpt";
  return s.str();
}

}  // namespace

ModelBundle run_training(const std::vector<TrainingPair>& pairs, const TrainConfig& cfg, const RunOptions& options,
                         RunManifest* manifest_out) {
  cfg.validate();
  CAPIT_REQUIRE(!pairs.empty(), InvalidInput, "run_training: no training pairs");
  CAPIT_REQUIRE(!options.out_dir.empty(), InvalidInput, "run_training: no output directory");
  const fs::path root(options.out_dir);
  std::error_code ec;
  fs::create_directories(root / "checkpoints", ec);
  if (ec) throw IoError("cannot create run directory " + options.out_dir);

  std::stringstream echo;
  cfg.echo(echo);
  ModelBundle models;
  std::vector<EpochRow> rows;
  int start = 0;
  if (!options.resume_from.empty()) {
    LoadedCheckpoint ck = load_training_checkpoint(options.resume_from);
    std::stringstream ck_echo;
    ck.config.echo(ck_echo);
    if (ck_echo.str() != echo.str()) throw IntegrityError("checkpoint was written with a different config");
    models = std::move(ck.models);
    rows = std::move(ck.rows);
    start = ck.epoch + 1;
  } else {
    models = ModelBundle::create(cfg);
  }

  RunManifest manifest;
  manifest.config_echo = echo.str();
  manifest.dataset_hash = options.dataset_hash;
  manifest.generator_params = models.G.params.scalar_count();
  manifest.discriminator_params = models.D.params.scalar_count();
  manifest.head_params = models.H.params.scalar_count();
  manifest.train_pairs = static_cast<int>(pairs.size());
  for (int e = cfg.checkpoint_every - 1; e < start; e += cfg.checkpoint_every) {
    manifest.checkpoints.push_back(checkpoint_name(e));
  }

  const auto t0 = std::chrono::steady_clock::now();
  const int last = options.stop_after_epoch >= 0 ? std::min(options.stop_after_epoch, cfg.epochs() - 1)
                                                 : cfg.epochs() - 1;
  const std::size_t B = static_cast<std::size_t>(cfg.batch_size);
  long long batch_id = 0;
  for (int epoch = start; epoch <= last; ++epoch) {
    auto rng = epoch_rng(cfg.seed, epoch);
    const double lr = lr_at(epoch, cfg);
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);

    EpochRow row;
    row.epoch = epoch;
    row.lr = lr;
    int batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += B) {
      std::vector<const TrainingPair*> batch;
      std::vector<const Image<T>*> prime;
      for (std::size_t k = b0; k < std::min(order.size(), b0 + B); ++k) {
        batch.push_back(&pairs[order[k]]);
        prime.push_back(&pairs[pick(rng)].target);
      }
      batch_id = static_cast<long long>(epoch) * 1000000 + batches;
      const StepReport rep = train_step(batch, prime, models, cfg, lr, rng, batch_id);
      row.gan_d += rep.terms.gan_d;
      row.gan_g += rep.terms.gan_g;
      row.l1 += rep.terms.l1;
      row.nce += rep.terms.nce;
      row.total += rep.terms.total;
      ++batches;
    }
    for (double* v : {&row.gan_d, &row.gan_g, &row.l1, &row.nce, &row.total}) *v /= batches;
    rows.push_back(row);
    if (options.on_epoch) options.on_epoch(row);

    if ((epoch + 1) % cfg.checkpoint_every == 0 || epoch == last) {
      const std::string name = checkpoint_name(epoch);
      write_checkpoint((root / name).string(), make_checkpoint(models, cfg, epoch, rows));
      manifest.checkpoints.push_back(name);
    }
  }
  manifest.rows = rows;

  std::ofstream out(root / "run_manifest.txt");
  if (!out) throw IoError("cannot write run manifest in " + options.out_dir);
  manifest.write(out);
  std::ofstream timing(root / "timing.txt");
  timing << "wall_clock_seconds = "
         << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << '\n';
  if (manifest_out) *manifest_out = std::move(manifest);
  return models;
}

// ---------------------------------------------------------------------------
// Ablation presets

std::vector<std::string> ablation_preset_names() {
  return {"row1", "row2", "row3", "row4", "row5", "window", "mask-threshold", "gan-mode"};
}

std::vector<AblationArm> ablation_preset(const std::string& name, const TrainConfig& base) {
  auto row = [&](int r) {
    TrainConfig c = base;
    c.weights.gan_mode = r <= 2 ? GanMode::conditional : GanMode::unpaired;
    c.toggles.use_mask = r >= 2;
    c.toggles.use_nce = r >= 4;
    c.toggles.use_misalign = r == 5;
    return c;
  };
  static const char* kRowLabels[] = {"cGAN + L1", "cGAN + L1 (+mask)", "uGAN + L1 (+mask)",
                                     "uGAN + L1 (+mask) + NCE (+mask)",
                                     "uGAN + L1 (+mask + misalignment) + NCE (+mask)"};
  if (name.size() == 4 && name.rfind("row", 0) == 0 && name[3] >= '1' && name[3] <= '5') {
    const int r = name[3] - '0';
    return {{kRowLabels[r - 1], row(r)}};
  }
  std::vector<AblationArm> arms;
  if (name == "window") {
    for (int k : {1, 3, 5}) {
      TrainConfig c = row(5);
      c.window = WindowSpec::square(k);
      arms.push_back({"k=" + std::to_string(k), c});
    }
  } else if (name == "mask-threshold") {
    for (double t : {0.9, 0.7, 0.5, 0.3, 0.1}) {
      TrainConfig c = row(5);
      c.mask_source = MaskSource::proposals;
      c.mask_threshold = t;
      arms.push_back({"threshold=" + format_double(t), c});
    }
  } else if (name == "gan-mode") {
    for (GanMode m : {GanMode::conditional, GanMode::paired, GanMode::unpaired}) {
      TrainConfig c = base;
      c.weights.gan_mode = m;
      c.toggles = {false, false, false};
      arms.push_back({to_string(m) + "-GAN + L1", c});
    }
  } else {
    throw ConfigError("unknown ablation preset '" + name + "'");
  }
  return arms;
}

}  // namespace capit
