#include "capit/masking.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>

#include "capit/error.hpp"
#include "capit/png_io.hpp"
#include "capit/text.hpp"

namespace capit {

BinaryMask build_foreground_mask(const InstanceProposals& proposals, double threshold,
                                 const std::set<std::string>& fg_classes) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw InvalidInput("threshold must lie in [0, 1]");
  BoolGrid foreground = BoolGrid::Constant(proposals.height, proposals.width, false);
  for (const auto& r : proposals.regions) {
    if (r.bitmap.rows() != proposals.height || r.bitmap.cols() != proposals.width) {
      throw InvalidInput("proposal bitmap shape does not match image shape");
    }
    if (!(r.confidence >= 0.0 && r.confidence <= 1.0)) throw InvalidInput("confidence outside [0, 1]");
    if (r.confidence >= threshold && fg_classes.count(r.class_label)) foreground = foreground || r.bitmap;
  }
  return BinaryMask(!foreground);
}

BinaryMask joint_background(const BinaryMask& mask_x, const BinaryMask& mask_y) {
  if (mask_x.height() != mask_y.height() || mask_x.width() != mask_y.width()) {
    throw InvalidInput("joint_background: shape mismatch");
  }
  return BinaryMask(mask_x.grid && mask_y.grid);
}

BinaryMask downsample_mask(const BinaryMask& mask, int factor, double keep_fraction) {
  if (factor <= 0) throw InvalidInput("downsample factor must be positive");
  if (mask.height() % factor != 0 || mask.width() % factor != 0) {
    throw InvalidInput("mask shape not divisible by downsample factor");
  }
  if (!(keep_fraction >= 0.0 && keep_fraction <= 1.0)) throw InvalidInput("keep_fraction must lie in [0, 1]");
  const int h = mask.height() / factor, w = mask.width() / factor;
  const double block = static_cast<double>(factor) * factor;
  BoolGrid out(h, w);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const auto count = mask.grid.block(i * factor, j * factor, factor, factor).count();
      out(i, j) = static_cast<double>(count) >= keep_fraction * block;
    }
  }
  return BinaryMask(std::move(out));
}

void write_mask_png(const std::string& path, const BinaryMask& mask) {
  RawPng png;
  png.width = mask.width();
  png.height = mask.height();
  png.channels = 1;
  png.bit_depth = 8;
  png.samples.resize(static_cast<std::size_t>(png.width) * png.height);
  for (int p = 0; p < png.width * png.height; ++p) png.samples[p] = mask.background(p) ? 255 : 0;
  write_png(path, png);
}

namespace {
BoolGrid read_bool_png(const std::string& path) {
  const RawPng png = read_png(path);
  if (png.channels != 1) throw IoError(path + ": mask must be single-channel");
  BoolGrid g(png.height, png.width);
  for (int p = 0; p < png.width * png.height; ++p) g.data()[p] = png.samples[p] != 0;
  return g;
}
}  // namespace

BinaryMask read_mask_png(const std::string& path) { return BinaryMask(read_bool_png(path)); }

void write_proposals(const std::string& sidecar_path, const std::string& region_prefix,
                     const InstanceProposals& proposals) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(sidecar_path).parent_path();
  std::ofstream out(sidecar_path);
  if (!out) throw IoError("cannot write proposals " + sidecar_path);
  out << std::setprecision(17);
  out << "# capit-proposals v1\n";
  out << "# shape: " << proposals.height << ' ' << proposals.width << '\n';
  for (std::size_t k = 0; k < proposals.regions.size(); ++k) {
    const auto& r = proposals.regions[k];
    const std::string name = region_prefix + "_r" + std::to_string(k) + ".png";
    // Region bitmaps reuse the mask encoding with inverted polarity: 255 = covered.
    write_mask_png((dir / name).string(), BinaryMask(r.bitmap));
    out << name << ',' << r.confidence << ',' << r.class_label << '\n';
  }
}

InstanceProposals read_proposals(const std::string& sidecar_path) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(sidecar_path).parent_path();
  std::ifstream in(sidecar_path);
  if (!in) throw IoError("cannot open proposals " + sidecar_path);
  InstanceProposals p;
  bool have_shape = false;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      if (t.rfind("# shape:", 0) == 0) {
        const auto dims = split(trim(t.substr(8)), ' ');
        if (dims.size() != 2) throw IoError("bad shape line in " + sidecar_path);
        p.height = static_cast<int>(parse_int(dims[0]));
        p.width = static_cast<int>(parse_int(dims[1]));
        have_shape = true;
      }
      continue;
    }
    const auto fields = split(t, ',');
    if (fields.size() != 3) throw IoError("bad proposal row in " + sidecar_path);
    InstanceRegion r;
    r.bitmap = read_bool_png((dir / fields[0]).string());
    r.confidence = parse_double(fields[1]);
    r.class_label = fields[2];
    p.regions.push_back(std::move(r));
  }
  if (!have_shape) throw IoError(sidecar_path + ": missing shape header");
  return p;
}

}  // namespace capit
