#include "capit/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "capit/error.hpp"
#include "capit/png_io.hpp"
#include "capit/text.hpp"

namespace capit {

namespace fs = std::filesystem;

bool AdverseTransform::is_identity() const {
  return gain == std::array<double, 3>{1, 1, 1} && bias == std::array<double, 3>{0, 0, 0} && gamma == 1.0 &&
         noise_std == 0.0;
}

void SynthConfig::validate() const {
  CAPIT_REQUIRE(height > 0 && width > 0, ConfigError, "synth: image size must be positive");
  CAPIT_REQUIRE(n_scenes > 0, ConfigError, "synth: n_scenes must be positive");
  CAPIT_REQUIRE(shift_max >= 0 && 2 * shift_max < std::min(height, width), ConfigError,
                "synth: shift_max must be >= 0 and smaller than half the image");
  CAPIT_REQUIRE(sprite_min >= 0 && sprite_max >= sprite_min, ConfigError, "synth: invalid sprite count range");
  CAPIT_REQUIRE(jitter_amplitude >= 0 && jitter_amplitude <= 1, ConfigError, "synth: jitter_amplitude not in [0,1]");
  CAPIT_REQUIRE(adverse.gamma > 0, ConfigError, "synth: gamma must be positive");
  CAPIT_REQUIRE(adverse.noise_std >= 0, ConfigError, "synth: noise_std must be >= 0");
  for (double g : adverse.gain) CAPIT_REQUIRE(g != 0.0, ConfigError, "synth: adverse gains must be nonzero");
  CAPIT_REQUIRE(route_spacing > 0 && gps_noise_std >= 0, ConfigError, "synth: invalid route geometry");
  CAPIT_REQUIRE(false_positives_max >= 0, ConfigError, "synth: false_positives_max must be >= 0");
  CAPIT_REQUIRE(!source_traversal.empty() && !target_traversal.empty() && source_traversal != target_traversal,
                ConfigError, "synth: traversal ids must be distinct and non-empty");
}

SynthConfig SynthConfig::from_config(const KeyValueConfig& kv) {
  SynthConfig c;
  c.height = kv.get("synth.height", c.height);
  c.width = kv.get("synth.width", c.width);
  c.n_scenes = kv.get("synth.n_scenes", c.n_scenes);
  c.shift_max = kv.get("synth.shift_max", c.shift_max);
  c.sprite_min = kv.get("synth.sprite_min", c.sprite_min);
  c.sprite_max = kv.get("synth.sprite_max", c.sprite_max);
  c.jitter_amplitude = kv.get("synth.jitter_amplitude", c.jitter_amplitude);
  auto triple = [&](const std::string& key, std::array<double, 3> fallback) {
    const auto v = kv.get(key, std::vector<double>(fallback.begin(), fallback.end()));
    if (v.size() != 3) throw ConfigError(key + ": expected 3 values");
    return std::array<double, 3>{v[0], v[1], v[2]};
  };
  c.adverse.gain = triple("synth.adverse_gain", c.adverse.gain);
  c.adverse.bias = triple("synth.adverse_bias", c.adverse.bias);
  c.adverse.gamma = kv.get("synth.adverse_gamma", c.adverse.gamma);
  c.adverse.noise_std = kv.get("synth.noise_std", c.adverse.noise_std);
  c.route_spacing = kv.get("synth.route_spacing", c.route_spacing);
  c.gps_noise_std = kv.get("synth.gps_noise_std", c.gps_noise_std);
  c.false_positives_max = kv.get("synth.false_positives_max", c.false_positives_max);
  c.source_traversal = kv.get("synth.source_traversal", c.source_traversal);
  c.target_traversal = kv.get("synth.target_traversal", c.target_traversal);
  c.seed = static_cast<std::uint64_t>(kv.get("synth.seed", static_cast<long long>(c.seed)));
  c.validate();
  return c;
}

void SynthConfig::echo(std::ostream& out) const {
  auto list = [](const std::array<double, 3>& a) { return format_list(std::vector<double>(a.begin(), a.end())); };
  out << "synth.height = " << height << '\n'
      << "synth.width = " << width << '\n'
      << "synth.n_scenes = " << n_scenes << '\n'
      << "synth.shift_max = " << shift_max << '\n'
      << "synth.sprite_min = " << sprite_min << '\n'
      << "synth.sprite_max = " << sprite_max << '\n'
      << "synth.jitter_amplitude = " << format_double(jitter_amplitude) << '\n'
      << "synth.adverse_gain = " << list(adverse.gain) << '\n'
      << "synth.adverse_bias = " << list(adverse.bias) << '\n'
      << "synth.adverse_gamma = " << format_double(adverse.gamma) << '\n'
      << "synth.noise_std = " << format_double(adverse.noise_std) << '\n'
      << "synth.route_spacing = " << format_double(route_spacing) << '\n'
      << "synth.gps_noise_std = " << format_double(gps_noise_std) << '\n'
      << "synth.false_positives_max = " << false_positives_max << '\n'
      << "synth.source_traversal = " << source_traversal << '\n'
      << "synth.target_traversal = " << target_traversal << '\n'
      << "synth.seed = " << seed << '\n';
}

namespace {

std::string frame_id(char prefix, int scene) {
  std::ostringstream s;
  s << prefix << std::setw(5) << std::setfill('0') << scene;
  return s.str();
}

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// Single-channel value noise: random lattice values, bilinear interpolation.
Eigen::ArrayXXd value_noise(int h, int w, int cell, Rng& rng) {
  const int gh = (h - 1) / cell + 3, gw = (w - 1) / cell + 3;  // covers y0 + 1 at the last row
  Eigen::ArrayXXd lattice(gh, gw);
  for (int a = 0; a < gh; ++a)
    for (int b = 0; b < gw; ++b) lattice(a, b) = uniform(rng, -1, 1);
  const double oy = uniform(rng, 0, 1), ox = uniform(rng, 0, 1);
  Eigen::ArrayXXd out(h, w);
  for (int i = 0; i < h; ++i) {
    const double y = i / static_cast<double>(cell) + oy;
    const int y0 = static_cast<int>(y);
    const double fy = y - y0;
    for (int j = 0; j < w; ++j) {
      const double x = j / static_cast<double>(cell) + ox;
      const int x0 = static_cast<int>(x);
      const double fx = x - x0;
      out(i, j) = (1 - fy) * ((1 - fx) * lattice(y0, x0) + fx * lattice(y0, x0 + 1)) +
                  fy * ((1 - fx) * lattice(y0 + 1, x0) + fx * lattice(y0 + 1, x0 + 1));
    }
  }
  return out;
}

Eigen::ArrayXXd multi_octave(int h, int w, Rng& rng) {
  Eigen::ArrayXXd acc = Eigen::ArrayXXd::Zero(h, w);
  double amp = 1.0, norm = 0.0;
  for (int cell = std::max(2, std::min(h, w) / 3); cell >= 2; cell /= 2) {
    acc += amp * value_noise(h, w, cell, rng);
    norm += amp;
    amp *= 0.6;
  }
  return acc / norm;
}

std::array<double, 3> random_colour(Rng& rng, double lo, double hi) {
  return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

// Street-like scene: facades above a horizon, a road band with lane dashes
// below, all modulated by multi-octave texture.
Image<double> background(int h, int w, Rng& rng) {
  Image<double> img(h, w, 3);
  const int horizon = static_cast<int>(h * uniform(rng, 0.35, 0.55));
  std::vector<std::pair<int, std::array<double, 3>>> facades;  // (end column, colour)
  for (int col = 0; col < w;) {
    col += uniform_int(rng, std::max(2, w / 8), std::max(3, w / 3));
    facades.push_back({std::min(col, w), random_colour(rng, -0.7, 0.8)});
  }
  const auto sky = random_colour(rng, 0.2, 0.9);
  const int facade_top = static_cast<int>(horizon * uniform(rng, 0.2, 0.5));
  const double road_grey = uniform(rng, -0.5, -0.1);
  const int lane_row = horizon + (h - horizon) / 2;
  const int dash = uniform_int(rng, 3, std::max(4, w / 6)), phase = uniform_int(rng, 0, dash);
  const auto tex = multi_octave(h, w, rng);
  std::array<Eigen::ArrayXXd, 3> tint;
  for (auto& t : tint) t = value_noise(h, w, std::max(2, std::min(h, w) / 4), rng);

  for (int i = 0; i < h; ++i) {
    std::size_t f = 0;
    for (int j = 0; j < w; ++j) {
      while (facades[f].first <= j) ++f;
      std::array<double, 3> c;
      if (i < facade_top) {
        c = sky;
      } else if (i < horizon) {
        c = facades[f].second;
        // window grid
        if ((i - facade_top) % 4 == 1 && j % 3 == 1) c = {c[0] * 0.3 + 0.5, c[1] * 0.3 + 0.5, c[2] * 0.3 + 0.4};
      } else {
        c = {road_grey, road_grey, road_grey + 0.05};
        if (std::abs(i - lane_row) <= 0 && ((j + phase) / dash) % 2 == 0) c = {0.85, 0.85, 0.8};
      }
      for (int ch = 0; ch < 3; ++ch) {
        const double v = c[ch] + 0.3 * tex(i, j) + 0.12 * tint[ch](i, j);
        img.at(i, j, ch) = std::clamp(v, -0.95, 0.95);
      }
    }
  }
  return img;
}

// Multiplicative darkening by a few soft blobs (shadow analogue).
Image<double> jitter(const Image<double>& in, double amplitude, Rng& rng) {
  const int h = in.height, w = in.width;
  const int blobs = uniform_int(rng, 2, 4);
  Eigen::ArrayXXd field = Eigen::ArrayXXd::Zero(h, w);
  for (int b = 0; b < blobs; ++b) {
    const double cy = uniform(rng, 0, h), cx = uniform(rng, 0, w);
    const double sigma = uniform(rng, std::min(h, w) / 10.0, std::min(h, w) / 5.0);
    const double strength = uniform(rng, 0.5, 1.0);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const double d2 = (i - cy) * (i - cy) + (j - cx) * (j - cx);
        field(i, j) += strength * std::exp(-d2 / (2 * sigma * sigma));
      }
  }
  Image<double> out = in;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double scale = 1.0 - amplitude * std::min(1.0, field(i, j));
      for (int c = 0; c < 3; ++c) out.at(i, j, c) = 2.0 * ((in.at(i, j, c) + 1.0) / 2.0 * scale) - 1.0;
    }
  return out;
}

struct Sprite {
  BoolGrid footprint;
  std::string label;
};

const std::vector<std::string>& sprite_labels() {
  static const std::vector<std::string> k(default_foreground_classes().begin(), default_foreground_classes().end());
  return k;
}

BoolGrid random_shape(int h, int w, Rng& rng) {
  const int sh = uniform_int(rng, std::max(2, h / 8), std::max(3, h / 4));
  const int sw = uniform_int(rng, std::max(2, w / 8), std::max(3, w / 4));
  const int i0 = uniform_int(rng, 0, h - sh), j0 = uniform_int(rng, 0, w - sw);
  BoolGrid g = BoolGrid::Constant(h, w, false);
  if (uniform(rng, 0, 1) < 0.5) {
    g.block(i0, j0, sh, sw).setConstant(true);
  } else {
    const double cy = i0 + (sh - 1) / 2.0, cx = j0 + (sw - 1) / 2.0;
    const double ry = sh / 2.0, rx = sw / 2.0;
    for (int i = i0; i < i0 + sh; ++i)
      for (int j = j0; j < j0 + sw; ++j) {
        const double u = (i - cy) / ry, v = (j - cx) / rx;
        g(i, j) = u * u + v * v <= 1.0;
      }
  }
  return g;
}

// Paints sprites (solid colour with a stripe) over `img`; returns footprints.
std::vector<Sprite> paint_sprites(Image<double>& img, int count, Rng& rng) {
  std::vector<Sprite> sprites;
  for (int s = 0; s < count; ++s) {
    Sprite sp{random_shape(img.height, img.width, rng),
              sprite_labels()[uniform_int(rng, 0, static_cast<int>(sprite_labels().size()) - 1)]};
    const auto colour = random_colour(rng, -0.9, 0.9);
    const auto stripe = random_colour(rng, -0.9, 0.9);
    const int period = uniform_int(rng, 2, 4);
    for (int i = 0; i < img.height; ++i)
      for (int j = 0; j < img.width; ++j) {
        if (!sp.footprint(i, j)) continue;
        const auto& c = (i % period == 0) ? stripe : colour;
        for (int ch = 0; ch < 3; ++ch) img.at(i, j, ch) = c[ch];
      }
    sprites.push_back(std::move(sp));
  }
  return sprites;
}

BinaryMask mask_of(const std::vector<Sprite>& sprites, int h, int w) {
  BoolGrid fg = BoolGrid::Constant(h, w, false);
  for (const auto& s : sprites) fg = fg || s.footprint;
  return BinaryMask(!fg);
}

// True sprites get confidences spread around the default threshold; spurious
// regions sit mostly below it. Occasionally a confident non-foreground class.
InstanceProposals proposals_for(const std::vector<Sprite>& sprites, int h, int w, int fp_max, Rng& rng) {
  InstanceProposals p{h, w, {}};
  for (const auto& s : sprites) p.regions.push_back({s.footprint, uniform(rng, 0.4, 1.0), s.label});
  const int fps = uniform_int(rng, 0, fp_max);
  for (int k = 0; k < fps; ++k) {
    p.regions.push_back({random_shape(h, w, rng), uniform(rng, 0.0, 0.6),
                         sprite_labels()[uniform_int(rng, 0, static_cast<int>(sprite_labels().size()) - 1)]});
  }
  if (uniform(rng, 0, 1) < 0.25) p.regions.push_back({random_shape(h, w, rng), uniform(rng, 0.5, 1.0), "pole"});
  return p;
}

double tone(double x, double gamma) { return gamma == 1.0 ? x : 2.0 * std::pow((x + 1.0) / 2.0, gamma) - 1.0; }

}  // namespace

std::string source_frame_id(int scene) { return frame_id('s', scene); }
std::string target_frame_id(int scene) { return frame_id('t', scene); }

Image<double> apply_adverse(const Image<double>& image, const AdverseTransform& t) {
  CAPIT_REQUIRE(image.channels() == 3, InvalidInput, "apply_adverse: expected 3 channels");
  Image<double> out = image;
  for (int c = 0; c < 3; ++c)
    for (int p = 0; p < image.pixels(); ++p)
      out.data(c, p) = t.gain[c] * tone(std::clamp(image.data(c, p), -1.0, 1.0), t.gamma) + t.bias[c];
  return out;
}

Image<double> invert_adverse(const Image<double>& image, const AdverseTransform& t) {
  CAPIT_REQUIRE(image.channels() == 3, InvalidInput, "invert_adverse: expected 3 channels");
  CAPIT_REQUIRE(t.gamma > 0, ConfigError, "invert_adverse: gamma must be positive");
  for (double g : t.gain) CAPIT_REQUIRE(g != 0.0, ConfigError, "invert_adverse: zero gain");
  Image<double> out = image;
  for (int c = 0; c < 3; ++c)
    for (int p = 0; p < image.pixels(); ++p) {
      const double u = std::clamp((image.data(c, p) - t.bias[c]) / t.gain[c], -1.0, 1.0);
      out.data(c, p) = tone(u, 1.0 / t.gamma);
    }
  return out;
}

Image<double> invert_adverse(const Image<double>& image, const SynthConfig& cfg) {
  return invert_adverse(image, cfg.adverse);
}

SynthPairRecord generate_scene(const SynthConfig& cfg, int scene) {
  cfg.validate();
  CAPIT_REQUIRE(scene >= 0, InvalidInput, "generate_scene: negative scene index");
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(scene)};
  Rng rng(seq);
  const int h = cfg.height, w = cfg.width;

  SynthPairRecord r;
  r.scene = scene;
  r.source_frame = source_frame_id(scene);
  r.target_frame = target_frame_id(scene);

  const Image<double> bg = background(h, w, rng);
  r.shift_dy = uniform_int(rng, -cfg.shift_max, cfg.shift_max);
  r.shift_dx = uniform_int(rng, -cfg.shift_max, cfg.shift_max);

  // Target: identity domain, own jitter and sprites.
  r.target = cfg.jitter_amplitude > 0 ? jitter(bg, cfg.jitter_amplitude, rng) : bg;
  const auto target_sprites = paint_sprites(r.target, uniform_int(rng, cfg.sprite_min, cfg.sprite_max), rng);
  r.target_mask = mask_of(target_sprites, h, w);
  r.target_proposals = proposals_for(target_sprites, h, w, cfg.false_positives_max, rng);

  // Source: shifted, independently jittered background with its own sprites,
  // pushed through the adverse colour map plus sensor noise.
  const Image<double> bg_s = cfg.jitter_amplitude > 0 ? jitter(bg, cfg.jitter_amplitude, rng) : bg;
  r.clean = shift_image(bg_s, r.shift_dy, r.shift_dx);
  Image<double> composed = r.clean;
  const auto source_sprites = paint_sprites(composed, uniform_int(rng, cfg.sprite_min, cfg.sprite_max), rng);
  r.source_mask = mask_of(source_sprites, h, w);
  r.source_proposals = proposals_for(source_sprites, h, w, cfg.false_positives_max, rng);
  r.source = apply_adverse(composed, cfg.adverse);
  if (cfg.adverse.noise_std > 0) {
    std::normal_distribution<double> noise(0.0, cfg.adverse.noise_std);
    for (Eigen::Index k = 0; k < r.source.data.size(); ++k) r.source.data.data()[k] += noise(rng);
  }
  r.source.data = r.source.data.cwiseMax(-1.0).cwiseMin(1.0);

  std::normal_distribution<double> gps(0.0, cfg.gps_noise_std);
  auto pose = [&](const std::string& id) {
    const double dx = cfg.gps_noise_std > 0 ? gps(rng) : 0.0;
    const double dy = cfg.gps_noise_std > 0 ? gps(rng) : 0.0;
    return PoseFrame{id, Eigen::Vector2d(scene * cfg.route_spacing + dx, dy), static_cast<double>(scene)};
  };
  r.source_pose = pose(r.source_frame);
  r.target_pose = pose(r.target_frame);
  return r;
}

namespace {

constexpr const char* kManifestTag = "# capit-synth v1";

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw IoError("cannot create directory " + p.string());
}

}  // namespace

void generate_dataset(const SynthConfig& cfg, const std::string& dir) {
  cfg.validate();
  const fs::path root(dir);
  const std::string st = cfg.source_traversal, tt = cfg.target_traversal;
  for (const auto& sub : {fs::path("images") / st, fs::path("images") / tt, fs::path("masks") / st,
                          fs::path("masks") / tt, fs::path("proposals") / st, fs::path("proposals") / tt,
                          fs::path("poses"), fs::path("clean")}) {
    ensure_dir(root / sub);
  }
  PoseLog src_log{st, {}}, tgt_log{tt, {}};
  std::ostringstream rows;
  for (int n = 0; n < cfg.n_scenes; ++n) {
    const SynthPairRecord r = generate_scene(cfg, n);
    write_image_png((root / "images" / st / (r.source_frame + ".png")).string(), r.source);
    write_image_png((root / "images" / tt / (r.target_frame + ".png")).string(), r.target);
    write_image_png((root / "clean" / (r.source_frame + ".png")).string(), r.clean);
    write_mask_png((root / "masks" / st / (r.source_frame + ".png")).string(), r.source_mask);
    write_mask_png((root / "masks" / tt / (r.target_frame + ".png")).string(), r.target_mask);
    write_proposals((root / "proposals" / st / (r.source_frame + ".txt")).string(), r.source_frame,
                    r.source_proposals);
    write_proposals((root / "proposals" / tt / (r.target_frame + ".txt")).string(), r.target_frame,
                    r.target_proposals);
    src_log.frames.push_back(r.source_pose);
    tgt_log.frames.push_back(r.target_pose);
    rows << r.scene << ", " << r.source_frame << ", " << r.target_frame << ", " << r.shift_dy << ", " << r.shift_dx
         << '\n';
  }
  write_pose_log_file((root / "poses" / (st + ".csv")).string(), src_log);
  write_pose_log_file((root / "poses" / (tt + ".csv")).string(), tgt_log);

  std::ofstream out(root / "manifest");
  if (!out) throw IoError("cannot write manifest in " + dir);
  out << kManifestTag << '\n';
  cfg.echo(out);
  out << "# records: " << cfg.n_scenes << '\n' << "# scene, source_frame, target_frame, shift_dy, shift_dx\n";
  out << rows.str();
  if (!out) throw IoError("write failed for manifest in " + dir);
}

SynthDataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream in(root / "manifest");
  if (!in) throw IoError("no dataset manifest in " + dir);
  std::string line;
  if (!std::getline(in, line) || trim(line) != kManifestTag) throw IntegrityError("bad dataset manifest tag");

  KeyValueConfig kv;
  std::vector<std::vector<std::string>> rows;
  long long declared = -1;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.rfind("# records:", 0) == 0) {
      declared = parse_int(trim(t.substr(10)));
    } else if (t[0] == '#') {
      continue;
    } else if (t.find('=') != std::string::npos) {
      const auto eq = t.find('=');
      kv.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } else {
      rows.push_back(split(t, ','));
    }
  }
  SynthDataset ds;
  ds.root = dir;
  ds.config = SynthConfig::from_config(kv);
  kv.require_all_used();
  if (declared != static_cast<long long>(rows.size()) || declared != ds.config.n_scenes) {
    throw IntegrityError("dataset manifest record count mismatch");
  }
  const std::string st = ds.config.source_traversal, tt = ds.config.target_traversal;
  ds.source_poses = read_pose_log_file((root / "poses" / (st + ".csv")).string());
  ds.target_poses = read_pose_log_file((root / "poses" / (tt + ".csv")).string());
  for (const auto& f : rows) {
    if (f.size() != 5) throw IntegrityError("bad dataset manifest row");
    SynthPairRecord r;
    r.scene = static_cast<int>(parse_int(f[0]));
    r.source_frame = f[1];
    r.target_frame = f[2];
    r.shift_dy = static_cast<int>(parse_int(f[3]));
    r.shift_dx = static_cast<int>(parse_int(f[4]));
    r.source = read_image_png((root / "images" / st / (r.source_frame + ".png")).string());
    r.target = read_image_png((root / "images" / tt / (r.target_frame + ".png")).string());
    r.clean = read_image_png((root / "clean" / (r.source_frame + ".png")).string());
    r.source_mask = read_mask_png((root / "masks" / st / (r.source_frame + ".png")).string());
    r.target_mask = read_mask_png((root / "masks" / tt / (r.target_frame + ".png")).string());
    r.source_proposals = read_proposals((root / "proposals" / st / (r.source_frame + ".txt")).string());
    r.target_proposals = read_proposals((root / "proposals" / tt / (r.target_frame + ".txt")).string());
    const int si = ds.source_poses.find(r.source_frame), ti = ds.target_poses.find(r.target_frame);
    if (si < 0 || ti < 0) throw IntegrityError("pose missing for record " + f[0]);
    r.source_pose = ds.source_poses.frames[si];
    r.target_pose = ds.target_poses.frames[ti];
    ds.records.push_back(std::move(r));
  }
  ds.hash = directory_hash(dir);
  return ds;
}

std::string directory_hash(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  Fnv1a h;
  for (const auto& rel : files) {
    h.update(rel.generic_string());
    std::ifstream in(fs::path(dir) / rel, std::ios::binary);
    if (!in) throw IoError("cannot read " + rel.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    h.update(std::to_string(bytes.size()));
    h.update(bytes);
  }
  return h.hex();
}

}  // namespace capit
