#pragma once

#include <Eigen/Core>
#include <set>
#include <string>
#include <vector>

namespace capit {

using BoolGrid = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-pixel background indicator; `true` marks background (usable by paired
/// losses), `false` marks foreground.
struct BinaryMask {
  BoolGrid grid;

  BinaryMask() = default;
  explicit BinaryMask(BoolGrid g) : grid(std::move(g)) {}

  static BinaryMask all_background(int h, int w) { return BinaryMask(BoolGrid::Constant(h, w, true)); }
  static BinaryMask all_foreground(int h, int w) { return BinaryMask(BoolGrid::Constant(h, w, false)); }

  int height() const { return static_cast<int>(grid.rows()); }
  int width() const { return static_cast<int>(grid.cols()); }
  bool background(int i, int j) const { return grid(i, j); }
  /// Background test by row-major flat index (matches Image column order).
  bool background(int p) const { return grid.data()[p]; }
  int background_count() const { return static_cast<int>(grid.count()); }

  bool operator==(const BinaryMask& o) const {
    return grid.rows() == o.grid.rows() && grid.cols() == o.grid.cols() && (grid == o.grid).all();
  }
};

struct InstanceRegion {
  BoolGrid bitmap;  // true = covered by the instance
  double confidence = 1.0;
  std::string class_label;
};

struct InstanceProposals {
  int height = 0;
  int width = 0;
  std::vector<InstanceRegion> regions;
};

inline const std::set<std::string>& default_foreground_classes() {
  static const std::set<std::string> k{"car", "pedestrian", "cyclist", "truck", "bus"};
  return k;
}

inline constexpr double kDefaultMaskThreshold = 0.5;

/// Foreground = union of regions with confidence >= threshold whose class is in
/// `fg_classes`. Returns the background mask.
BinaryMask build_foreground_mask(const InstanceProposals& proposals, double threshold = kDefaultMaskThreshold,
                                 const std::set<std::string>& fg_classes = default_foreground_classes());

/// M(x, y): background in both inputs.
BinaryMask joint_background(const BinaryMask& mask_x, const BinaryMask& mask_y);

/// Block-reduces the mask by `factor`; a cell stays background when at least
/// `keep_fraction` of its pixels are background.
BinaryMask downsample_mask(const BinaryMask& mask, int factor, double keep_fraction = 1.0);

// Single-channel 8-bit PNG: 0 = foreground, 255 = background.
void write_mask_png(const std::string& path, const BinaryMask& mask);
BinaryMask read_mask_png(const std::string& path);

// Proposal sidecar: `# capit-proposals v1`, `# shape: h w`, then one
// `region_file, confidence, class` row per region (region files relative to
// the sidecar's directory; nonzero pixels = covered).
void write_proposals(const std::string& sidecar_path, const std::string& region_prefix,
                     const InstanceProposals& proposals);
InstanceProposals read_proposals(const std::string& sidecar_path);

}  // namespace capit
