#include "capit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>

#include "capit/config.hpp"
#include "capit/error.hpp"
#include "capit/text.hpp"

namespace capit {

Embedder::Embedder(std::uint64_t seed, int dim, int in_channels) : seed_(seed), dim_(dim) {
  CAPIT_REQUIRE(dim >= 4 && in_channels >= 1, ConfigError, "embedder: invalid size");
  std::mt19937_64 rng(seed);
  const int widths[] = {in_channels, std::max(1, dim / 4), std::max(1, dim / 2), dim};
  for (int l = 0; l < 3; ++l) {
    const int fan_in = widths[l] * 9;
    nn::Node conv;
    conv.op = nn::Op::conv;
    conv.geometry = {3, 2, 1};
    conv.weight = params_.add("e" + std::to_string(l) + ".w",
                              nn::normal_init<double>(widths[l + 1], fan_in, std::sqrt(2.0 / fan_in), rng));
    conv.bias = params_.add("e" + std::to_string(l) + ".b", nn::normal_init<double>(widths[l + 1], 1, 0.1, rng));
    net_.nodes.push_back(conv);
    nn::Node act;
    act.op = nn::Op::leaky_relu;
    act.slope = 0.2;
    net_.nodes.push_back(act);
  }
}

Eigen::VectorXd Embedder::embed(const Image<double>& image) const {
  const Image<double> f = net_.forward(params_, image, nullptr);
  return f.data.rowwise().mean();
}

Eigen::MatrixXd Embedder::embed_all(const std::vector<Image<double>>& images) const {
  Eigen::MatrixXd out(dim_, static_cast<Eigen::Index>(images.size()));
  for (std::size_t k = 0; k < images.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = embed(images[k]);
  return out;
}

FeatureStats feature_stats(const Eigen::MatrixXd& samples) {
  CAPIT_REQUIRE(samples.cols() >= 2, InvalidInput, "feature_stats: need at least 2 samples");
  FeatureStats s;
  s.count = static_cast<int>(samples.cols());
  s.mean = samples.rowwise().mean();
  const Eigen::MatrixXd centred = samples.colwise() - s.mean;
  s.covariance = centred * centred.transpose() / static_cast<double>(s.count - 1);
  s.covariance = 0.5 * (s.covariance + s.covariance.transpose());
  return s;
}

FeatureStats feature_stats(const std::vector<Image<double>>& images, const Embedder& embedder) {
  CAPIT_REQUIRE(images.size() >= 2, InvalidInput, "feature_stats: need at least 2 images");
  return feature_stats(embedder.embed_all(images));
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  CAPIT_REQUIRE(a.mean.size() == b.mean.size() && a.covariance.rows() == b.covariance.rows(), InvalidInput,
                "frechet_distance: dimension mismatch");
  const Eigen::MatrixXd ra = psd_sqrt(a.covariance);
  const Eigen::MatrixXd inner = ra * b.covariance * ra;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double tr_cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2.0 * tr_cross;
  return std::max(0.0, d);
}

double masked_psnr(const Image<double>& pred, const Image<double>& clean, const BinaryMask& mask) {
  require_same_shape(pred, clean, "masked_psnr");
  CAPIT_REQUIRE(mask.height() == pred.height && mask.width() == pred.width, InvalidInput,
                "masked_psnr: mask shape mismatch");
  if (mask.background_count() == 0) throw DegenerateInput("masked_psnr: mask has no background pixels");
  double sse = 0.0;
  for (int p = 0; p < pred.pixels(); ++p)
    if (mask.background(p)) sse += (pred.data.col(p) - clean.data.col(p)).squaredNorm();
  const double mse = sse / (static_cast<double>(mask.background_count()) * pred.channels());
  if (mse < 1e-12) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(4.0 / mse));
}

LocalizationResult localize(const std::vector<Image<double>>& queries, const std::vector<Eigen::Vector2d>& query_poses,
                            const std::vector<Image<double>>& library,
                            const std::vector<Eigen::Vector2d>& library_poses, const Embedder& embedder) {
  CAPIT_REQUIRE(!library.empty(), InvalidInput, "localize: empty library");
  CAPIT_REQUIRE(library.size() == library_poses.size() && queries.size() == query_poses.size(), InvalidInput,
                "localize: poses not aligned with images");
  auto unit = [](Eigen::MatrixXd m) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
      const double n = m.col(k).norm();
      if (n > 0) m.col(k) /= n;
    }
    return m;
  };
  const Eigen::MatrixXd lib = unit(embedder.embed_all(library));
  const Eigen::MatrixXd q = unit(embedder.embed_all(queries));
  const Eigen::MatrixXd sim = q.transpose() * lib;  // queries x library
  LocalizationResult r;
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < sim.cols(); ++j)
      if (sim(i, j) > sim(i, best)) best = j;
    r.matches.push_back(static_cast<int>(best));
    r.errors.push_back((query_poses[i] - library_poses[best]).norm());
  }
  if (!r.errors.empty()) {
    std::vector<double> sorted = r.errors;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    r.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    for (double e : r.errors) r.mean += e;
    r.mean /= static_cast<double>(n);
  }
  return r;
}

void MetricsReport::write(std::ostream& out) const {
  auto common = [&] {
    out << "dataset_hash = " << dataset_hash << '\n'
        << "embedder.kind = random-conv-gap\n"
        << "embedder.seed = " << embedder_seed << '\n'
        << "embedder.dim = " << embedder_dim << '\n'
        << "queries = " << queries << '\n';
  };
  out << "# capit-metrics v1\n";
  out << "[fid]\n";
  common();
  out << "translated = " << format_double(fid) << '\n'
      << "untranslated = " << format_double(fid_untranslated) << '\n';
  out << "[masked_psnr]\n";
  common();
  out << "range = 2\n"
      << "translated_mean_db = " << format_double(masked_psnr_mean) << '\n'
      << "untranslated_mean_db = " << format_double(masked_psnr_untranslated) << '\n';
  out << "[loc_err]\n";
  common();
  out << "translated_mean_m = " << format_double(loc.mean) << '\n'
      << "translated_median_m = " << format_double(loc.median) << '\n'
      << "untranslated_mean_m = " << format_double(loc_untranslated.mean) << '\n'
      << "untranslated_median_m = " << format_double(loc_untranslated.median) << '\n';
}

std::map<std::string, std::string> MetricsReport::read(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string block, line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      block = t.substr(1, t.size() - 2);
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos || block.empty()) throw IntegrityError("bad metrics line: " + t);
    out[block + "." + trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return out;
}

MetricsReport evaluate(const SynthDataset& ds, const std::map<std::string, Image<double>>& predictions,
                       const Embedder& embedder) {
  CAPIT_REQUIRE(predictions.size() >= 2, InvalidInput, "evaluate: need at least 2 translated images");
  const CoarsePairManifest pairs = pair_traversals(ds.source_poses, ds.target_poses, kDefaultMaxPairDistance);
  std::map<std::string, std::string> target_of;
  for (const auto& p : pairs.pairs) target_of[p.source_frame] = p.target_frame;
  std::map<std::string, const SynthPairRecord*> by_source, by_target;
  for (const auto& r : ds.records) {
    by_source[r.source_frame] = &r;
    by_target[r.target_frame] = &r;
  }

  std::vector<Image<double>> pred, untranslated, targets;
  std::vector<Eigen::Vector2d> query_poses;
  MetricsReport rep;
  for (const auto& [frame, image] : predictions) {
    const auto s = by_source.find(frame);
    if (s == by_source.end()) throw IntegrityError("prediction for unknown source frame " + frame);
    const auto t = target_of.find(frame);
    if (t == target_of.end()) throw IntegrityError("source frame " + frame + " has no coarse pair");
    const SynthPairRecord& rec = *s->second;
    require_same_shape(image, rec.clean, "evaluate");
    pred.push_back(image);
    untranslated.push_back(rec.source);
    targets.push_back(by_target.at(t->second)->target);
    query_poses.push_back(rec.source_pose.position);
    rep.masked_psnr_mean += masked_psnr(image, rec.clean, rec.source_mask);
    rep.masked_psnr_untranslated += masked_psnr(rec.source, rec.clean, rec.source_mask);
  }
  const double n = static_cast<double>(pred.size());
  rep.masked_psnr_mean /= n;
  rep.masked_psnr_untranslated /= n;

  const FeatureStats target_stats = feature_stats(targets, embedder);
  rep.fid = frechet_distance(feature_stats(pred, embedder), target_stats);
  rep.fid_untranslated = frechet_distance(feature_stats(untranslated, embedder), target_stats);

  std::vector<Image<double>> library;
  std::vector<Eigen::Vector2d> library_poses;
  for (const auto& r : ds.records) {
    library.push_back(r.target);
    library_poses.push_back(r.target_pose.position);
  }
  rep.loc = localize(pred, query_poses, library, library_poses, embedder);
  rep.loc_untranslated = localize(untranslated, query_poses, library, library_poses, embedder);

  rep.dataset_hash = ds.hash;
  rep.embedder_seed = embedder.seed();
  rep.embedder_dim = embedder.dim();
  rep.queries = static_cast<int>(pred.size());
  return rep;
}

}  // namespace capit
