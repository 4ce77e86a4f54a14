#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "capit/masking.hpp"
#include "capit/nn/network.hpp"
#include "capit/pairing.hpp"
#include "capit/synthdata.hpp"
#include "capit/tensor.hpp"

namespace capit {

struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // unbiased
  int count = 0;
};

/// Fixed-seed random convolutional embedder: three stride-2 3x3 convolutions
/// with leaky ReLU, then global average pooling to `dim` features.
class Embedder {
 public:
  explicit Embedder(std::uint64_t seed = 0, int dim = 64, int in_channels = 3);

  Eigen::VectorXd embed(const Image<double>& image) const;
  Eigen::MatrixXd embed_all(const std::vector<Image<double>>& images) const;  // dim x n
  int dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  int dim_;
  nn::ParamStore<double> params_;
  nn::Sequential<double> net_;
};

/// Column-wise samples (d x n), n >= 2.
FeatureStats feature_stats(const Eigen::MatrixXd& samples);
FeatureStats feature_stats(const std::vector<Image<double>>& images, const Embedder& embedder);

/// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2), symmetric
/// square roots with negative eigenvalues clipped to zero.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(range^2 / MSE) over background pixels, range 2; kPsnrCap when the
/// MSE is below 1e-12.
double masked_psnr(const Image<double>& pred, const Image<double>& clean, const BinaryMask& mask);

struct LocalizationResult {
  std::vector<double> errors;  // per query, meters
  std::vector<int> matches;    // library index per query
  double mean = 0.0;
  double median = 0.0;
};

/// Matches each query to the library entry of highest cosine similarity
/// (earliest index on ties) and reports the pose distance.
LocalizationResult localize(const std::vector<Image<double>>& queries, const std::vector<Eigen::Vector2d>& query_poses,
                            const std::vector<Image<double>>& library,
                            const std::vector<Eigen::Vector2d>& library_poses, const Embedder& embedder);

struct MetricsReport {
  std::string dataset_hash;
  std::uint64_t embedder_seed = 0;
  int embedder_dim = 0;
  int queries = 0;
  double fid = 0;               // translated vs target-domain images
  double fid_untranslated = 0;  // adverse inputs vs target-domain images
  double masked_psnr_mean = 0;
  double masked_psnr_untranslated = 0;
  LocalizationResult loc;
  LocalizationResult loc_untranslated;

  void write(std::ostream& out) const;
  /// Flat `block.field` view of the written report.
  static std::map<std::string, std::string> read(std::istream& in);
};

/// Evaluates translated images (keyed by source frame id) against the
/// dataset: FID against the target traversal's images of the same pairs,
/// masked PSNR against the clean ground truth under the source mask, and
/// retrieval over the full target traversal as the library.
MetricsReport evaluate(const SynthDataset& ds, const std::map<std::string, Image<double>>& predictions,
                       const Embedder& embedder);

}  // namespace capit
