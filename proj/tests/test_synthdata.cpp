#include "capit/synthdata.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "capit/losses.hpp"
#include "capit/png_io.hpp"
#include "oracles.hpp"

using namespace capit;
namespace fs = std::filesystem;

namespace {

SynthConfig all_factors_off() {
  SynthConfig c;
  c.shift_max = 0;
  c.jitter_amplitude = 0;
  c.sprite_min = c.sprite_max = 0;
  c.adverse = AdverseTransform::identity();
  c.n_scenes = 4;
  return c;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) { fs::remove_all(path); }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(Synth, AllFactorsOffGivesIdenticalImages) {
  const auto cfg = all_factors_off();
  for (int n = 0; n < cfg.n_scenes; ++n) {
    const auto r = generate_scene(cfg, n);
    EXPECT_EQ(r.source.data, r.target.data);
    EXPECT_EQ(r.clean.data, r.target.data);
    EXPECT_EQ(r.source_mask.background_count(), cfg.height * cfg.width);
  }
}

TEST(Synth, ShiftIsBoundedAndExact) {
  auto cfg = all_factors_off();
  cfg.shift_max = 2;
  bool saw_nonzero = false;
  for (int n = 0; n < 40; ++n) {
    const auto r = generate_scene(cfg, n);
    EXPECT_LE(std::abs(r.shift_dy), 2);
    EXPECT_LE(std::abs(r.shift_dx), 2);
    saw_nonzero = saw_nonzero || r.shift_dy != 0 || r.shift_dx != 0;
    EXPECT_EQ(r.source.data, shift_image(r.target, r.shift_dy, r.shift_dx).data);
  }
  EXPECT_TRUE(saw_nonzero);
}

TEST(Synth, MasksCoverSpritesExactly) {
  auto cfg = all_factors_off();
  cfg.sprite_min = 1;
  cfg.sprite_max = 3;
  for (int n = 0; n < 20; ++n) {
    const auto r = generate_scene(cfg, n);
    // Sprites only change foreground pixels, and the foreground is the union
    // of the sprite proposals' true footprints.
    int changed_fg = 0, fg = 0;
    for (int p = 0; p < r.source.pixels(); ++p) {
      const bool differs = (r.source.data.col(p) - r.clean.data.col(p)).cwiseAbs().maxCoeff() > 0;
      if (r.source_mask.background(p)) {
        EXPECT_FALSE(differs);
      } else {
        ++fg;
        changed_fg += differs;
      }
    }
    EXPECT_GT(fg, 0);
    EXPECT_GT(changed_fg, 0.9 * fg);
    BoolGrid covered = BoolGrid::Constant(cfg.height, cfg.width, false);
    for (const auto& reg : r.source_proposals.regions)
      if (reg.confidence >= 0.4 && reg.class_label != "pole") covered = covered || reg.bitmap;
    EXPECT_TRUE(((!r.source_mask.grid) && !covered).count() == 0);
  }
}

TEST(Synth, OracleTranslationZeroesMaskedL1) {
  auto cfg = all_factors_off();
  cfg.adverse = AdverseTransform::night();
  cfg.adverse.noise_std = 0.0;
  cfg.sprite_min = 1;
  cfg.sprite_max = 3;
  for (int n = 0; n < 10; ++n) {
    const auto r = generate_scene(cfg, n);
    const auto oracle = invert_adverse(r.source, cfg);
    const auto mask = joint_background(r.source_mask, r.target_mask);
    EXPECT_LT(l1_star(oracle, r.target, mask, WindowSpec::square(0)), 1e-9);
  }
}

TEST(InvertAdverse, Examples) {
  std::mt19937_64 rng(3);
  const auto x = oracle::random_image(5, 7, 3, rng);
  EXPECT_EQ(invert_adverse(x, AdverseTransform::identity()).data, x.data);

  AdverseTransform t;
  t.gain = {2, 2, 2};
  t.bias = {0.1, 0.1, 0.1};
  const auto px = Image<double>::constant(1, 1, 3, 0.5);
  const auto adv = apply_adverse(px, t);
  EXPECT_NEAR(adv.data(0, 0), 1.1, 1e-15);
  EXPECT_NEAR(invert_adverse(adv, t).data(0, 0), 0.5, 1e-15);

  const auto night = AdverseTransform::night();
  for (int trial = 0; trial < 20; ++trial) {
    const auto img = oracle::random_image(8, 8, 3, rng);
    EXPECT_LT((invert_adverse(apply_adverse(img, night), night).data - img.data).cwiseAbs().maxCoeff(), 1e-6);
  }
  AdverseTransform zero = night;
  zero.gain[1] = 0.0;
  EXPECT_THROW(invert_adverse(x, zero), ConfigError);
  SynthConfig cfg;
  cfg.adverse = zero;
  EXPECT_THROW(invert_adverse(x, cfg), ConfigError);
}

TEST(Synth, ConfigValidationAndEcho) {
  SynthConfig bad;
  bad.shift_max = -1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = SynthConfig();
  bad.adverse.gamma = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = SynthConfig();
  bad.sprite_min = 4;
  bad.sprite_max = 2;
  EXPECT_THROW(bad.validate(), ConfigError);

  SynthConfig c;
  c.seed = 77;
  c.adverse.gain = {0.3, 0.7, 0.123456789};
  std::stringstream s;
  c.echo(s);
  const auto kv = KeyValueConfig::parse(s);
  const auto back = SynthConfig::from_config(kv);
  EXPECT_NO_THROW(kv.require_all_used());
  EXPECT_EQ(back.seed, 77u);
  EXPECT_EQ(back.adverse.gain, c.adverse.gain);
  std::stringstream typo("synth.shift_mx = 3\n");
  const auto kv2 = KeyValueConfig::parse(typo);
  SynthConfig::from_config(kv2);
  EXPECT_THROW(kv2.require_all_used(), ConfigError);
}

TEST(SynthDataset, DeterministicAndRoundTrips) {
  SynthConfig cfg;
  cfg.n_scenes = 6;
  cfg.height = cfg.width = 16;
  cfg.seed = 5;
  TempDir a("capit_synth_a"), b("capit_synth_b");
  generate_dataset(cfg, a.path.string());
  generate_dataset(cfg, b.path.string());
  EXPECT_EQ(directory_hash(a.path.string()), directory_hash(b.path.string()));
  for (const auto& e : fs::recursive_directory_iterator(a.path)) {
    if (!e.is_regular_file()) continue;
    std::ifstream fa(e.path(), std::ios::binary), fb(b.path / fs::relative(e.path(), a.path), std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
    EXPECT_EQ(sa, sb) << e.path();
  }

  const auto ds = load_dataset(a.path.string());
  ASSERT_EQ(ds.records.size(), 6u);
  EXPECT_EQ(ds.config.seed, 5u);
  for (int n = 0; n < 6; ++n) {
    const auto g = generate_scene(cfg, n);
    const auto& r = ds.records[n];
    EXPECT_EQ(r.source.data, quantize_16(g.source).data);
    EXPECT_EQ(r.target.data, quantize_16(g.target).data);
    EXPECT_EQ(r.clean.data, quantize_16(g.clean).data);
    EXPECT_EQ(r.source_mask, g.source_mask);
    EXPECT_EQ(r.target_mask, g.target_mask);
    EXPECT_EQ(r.source_pose.position, g.source_pose.position);
    ASSERT_EQ(r.source_proposals.regions.size(), g.source_proposals.regions.size());
    for (std::size_t k = 0; k < g.source_proposals.regions.size(); ++k) {
      EXPECT_EQ(r.source_proposals.regions[k].confidence, g.source_proposals.regions[k].confidence);
      EXPECT_EQ(r.source_proposals.regions[k].class_label, g.source_proposals.regions[k].class_label);
    }
    EXPECT_EQ(r.shift_dy, g.shift_dy);
  }
  EXPECT_EQ(ds.source_poses.frames.size(), 6u);

  SynthConfig other = cfg;
  other.seed = 6;
  TempDir c("capit_synth_c");
  generate_dataset(other, c.path.string());
  EXPECT_NE(directory_hash(a.path.string()), directory_hash(c.path.string()));
}

TEST(SynthDataset, PosesFollowTheRoute) {
  SynthConfig cfg;
  cfg.height = cfg.width = 8;
  cfg.gps_noise_std = 0.0;
  for (int n = 0; n < 5; ++n) {
    const auto r = generate_scene(cfg, n);
    EXPECT_DOUBLE_EQ(r.source_pose.position.x(), n * cfg.route_spacing);
    EXPECT_EQ(r.source_pose.position, r.target_pose.position);
  }
}

TEST(SynthDataset, Errors) {
  TempDir t("capit_synth_err");
  fs::create_directories(t.path);
  std::ofstream(t.path / "file") << "x";
  SynthConfig cfg;
  cfg.n_scenes = 1;
  cfg.height = cfg.width = 8;
  EXPECT_THROW(generate_dataset(cfg, (t.path / "file" / "sub").string()), IoError);
  EXPECT_THROW(load_dataset((t.path / "missing").string()), IoError);
}
