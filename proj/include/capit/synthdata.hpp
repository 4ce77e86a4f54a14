#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "capit/config.hpp"
#include "capit/masking.hpp"
#include "capit/pairing.hpp"
#include "capit/tensor.hpp"

namespace capit {

/// Deterministic per-channel colour map y = gain_c * g(x) + bias_c with the
/// tone curve g(x) = 2((x+1)/2)^gamma - 1, followed by additive Gaussian noise.
struct AdverseTransform {
  std::array<double, 3> gain{1.0, 1.0, 1.0};
  std::array<double, 3> bias{0.0, 0.0, 0.0};
  double gamma = 1.0;
  double noise_std = 0.0;

  static AdverseTransform identity() { return {}; }
  /// Dark, blue-shifted, low-contrast look.
  static AdverseTransform night() { return {{0.45, 0.42, 0.55}, {-0.45, -0.48, -0.32}, 1.6, 0.01}; }
  bool is_identity() const;
};

struct SynthConfig {
  int height = 48;
  int width = 48;
  int n_scenes = 250;
  int shift_max = 2;
  int sprite_min = 1;
  int sprite_max = 3;
  double jitter_amplitude = 0.35;
  AdverseTransform adverse = AdverseTransform::night();
  double route_spacing = 10.0;  // meters between scenes
  double gps_noise_std = 0.5;   // meters
  int false_positives_max = 2;  // spurious proposals per image
  std::string source_traversal = "adverse";
  std::string target_traversal = "benign";
  std::uint64_t seed = 0;

  void validate() const;  // ConfigError
  /// Reads `synth.*` keys over the defaults.
  static SynthConfig from_config(const KeyValueConfig& kv);
  void echo(std::ostream& out) const;
};

struct SynthPairRecord {
  int scene = 0;
  std::string source_frame;
  std::string target_frame;
  Image<double> source;
  Image<double> target;
  Image<double> clean;  // source background translated to the target domain, sprite-free, noise-free
  BinaryMask source_mask;  // exact sprite footprints
  BinaryMask target_mask;
  InstanceProposals source_proposals;  // sprites plus spurious regions, with confidences
  InstanceProposals target_proposals;
  PoseFrame source_pose;
  PoseFrame target_pose;
  int shift_dy = 0;
  int shift_dx = 0;
};

std::string source_frame_id(int scene);
std::string target_frame_id(int scene);

/// Deterministic in (cfg.seed, scene). Images are not quantised.
SynthPairRecord generate_scene(const SynthConfig& cfg, int scene);

Image<double> apply_adverse(const Image<double>& image, const AdverseTransform& t);  // noise excluded
Image<double> invert_adverse(const Image<double>& image, const AdverseTransform& t);
Image<double> invert_adverse(const Image<double>& image, const SynthConfig& cfg);

struct SynthDataset {
  std::string root;
  SynthConfig config;
  std::vector<SynthPairRecord> records;
  PoseLog source_poses;
  PoseLog target_poses;
  std::string hash;  // fingerprint of every file under root
};

/// Writes the directory layout
///   manifest, images/{trav}/{frame}.png, masks/{trav}/{frame}.png,
///   proposals/{trav}/{frame}.txt (+ region PNGs), poses/{trav}.csv,
///   clean/{frame}.png
/// Images are stored on the 16-bit grid, so loading returns quantize_16 of the
/// generated values.
void generate_dataset(const SynthConfig& cfg, const std::string& dir);

SynthDataset load_dataset(const std::string& dir);

/// FNV-1a over relative paths and bytes of every regular file, sorted by path.
std::string directory_hash(const std::string& dir);

}  // namespace capit
