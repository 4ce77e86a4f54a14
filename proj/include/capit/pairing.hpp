#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace capit {

struct PoseFrame {
  std::string frame_id;
  Eigen::Vector2d position;  // meters
  double timestamp = 0.0;    // seconds
};

/// Ordered GPS log of one traversal.
struct PoseLog {
  std::string traversal_id;
  std::vector<PoseFrame> frames;

  /// Throws InvalidInput on empty log, duplicate frame ids, non-finite positions.
  void validate() const;
  int find(const std::string& frame_id) const;  // -1 when absent
};

struct CoarsePair {
  std::string source_frame;
  std::string target_frame;
  double gps_distance = 0.0;

  bool operator==(const CoarsePair&) const = default;
};

struct CoarsePairManifest {
  std::string source_traversal;
  std::string target_traversal;
  double max_distance = 0.0;
  std::vector<CoarsePair> pairs;

  bool operator==(const CoarsePairManifest&) const = default;
};

inline constexpr double kDefaultMaxPairDistance = 5.0;

/// Pairs every source frame with its nearest target frame by Euclidean GPS
/// distance (earliest target index wins ties), dropping pairs farther than
/// `max_distance`. A target frame may be used by several source frames.
CoarsePairManifest pair_traversals(const PoseLog& source, const PoseLog& target,
                                   double max_distance = kDefaultMaxPairDistance);

/// Splits pairs by cumulative arc length of their source frame along the
/// source route: fraction < boundary goes to the first manifest.
std::pair<CoarsePairManifest, CoarsePairManifest> split_by_location(
    const CoarsePairManifest& manifest, const PoseLog& source, double boundary);

// Text formats. Pose log: `traversal_id, frame_id, x_m, y_m, t_s` per line.
// Lines starting with '#' and blank lines are ignored.
std::vector<PoseLog> read_pose_logs(std::istream& in);
PoseLog read_pose_log_file(const std::string& path);
void write_pose_log(std::ostream& out, const PoseLog& log);
void write_pose_log_file(const std::string& path, const PoseLog& log);

// Manifest: header block (`# key: value`) followed by `source,target,distance` rows.
void write_manifest(std::ostream& out, const CoarsePairManifest& m);
CoarsePairManifest read_manifest(std::istream& in);
void write_manifest_file(const std::string& path, const CoarsePairManifest& m);
CoarsePairManifest read_manifest_file(const std::string& path);

}  // namespace capit
