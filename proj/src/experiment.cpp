#include "capit/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>

#include "capit/error.hpp"

namespace capit {

namespace fs = std::filesystem;

Image<double> translate_image(const Generator<TrainScalar>& G, const Image<double>& image) {
  return G.forward(image.cast<TrainScalar>()).cast<double>();
}

std::map<std::string, Image<double>> translate_frames(const Generator<TrainScalar>& G, const SynthDataset& ds,
                                                      const std::vector<std::string>& source_frames) {
  std::map<std::string, const SynthPairRecord*> by_source;
  for (const auto& r : ds.records) by_source[r.source_frame] = &r;
  std::map<std::string, Image<double>> out;
  for (const auto& f : source_frames) {
    const auto it = by_source.find(f);
    if (it == by_source.end()) throw IntegrityError("unknown source frame " + f);
    out[f] = translate_image(G, it->second->source);
  }
  return out;
}

ArmOutcome run_arm(const SynthDataset& ds, const AblationArm& arm, const std::string& out_dir,
                   const Embedder& embedder) {
  const TrainConfig& cfg = arm.config;
  const DatasetSplit split = split_dataset(ds, cfg.max_pair_distance, cfg.train_fraction);
  const std::vector<TrainingPair> pairs = training_pairs(ds, split.train, cfg);

  ArmOutcome outcome;
  outcome.label = arm.label;
  RunOptions opts;
  opts.out_dir = out_dir;
  opts.dataset_hash = ds.hash;
  const ModelBundle models = run_training(pairs, cfg, opts, &outcome.manifest);

  const CoarsePairManifest& held_out = split.test.pairs.size() >= 2 ? split.test : split.train;
  std::vector<std::string> frames;
  for (const auto& p : held_out.pairs) frames.push_back(p.source_frame);
  outcome.metrics = evaluate(ds, translate_frames(models.G, ds, frames), embedder);

  std::ofstream m(fs::path(out_dir) / "metrics.txt");
  if (!m) throw IoError("cannot write metrics in " + out_dir);
  outcome.metrics.write(m);
  return outcome;
}

void write_ablation_report(std::ostream& out, const std::string& preset, const std::string& dataset_hash,
                           const std::vector<ArmOutcome>& arms) {
  out << "# capit-ablation v1\n"
      << "# preset: " << preset << '\n'
      << "# dataset_hash: " << dataset_hash << '\n';
  if (!arms.empty()) {
    out << "# embedder: seed " << arms.front().metrics.embedder_seed << ", dim " << arms.front().metrics.embedder_dim
        << '\n';
  }
  auto row = [&](const std::string& name, auto field) {
    out << name;
    for (const auto& a : arms) out << " | " << field(a);
    out << '\n';
  };
  row("metric", [](const ArmOutcome& a) { return a.label; });
  row("fid", [](const ArmOutcome& a) { return format_double(a.metrics.fid); });
  row("fid_untranslated", [](const ArmOutcome& a) { return format_double(a.metrics.fid_untranslated); });
  row("masked_psnr_db", [](const ArmOutcome& a) { return format_double(a.metrics.masked_psnr_mean); });
  row("masked_psnr_untranslated_db",
      [](const ArmOutcome& a) { return format_double(a.metrics.masked_psnr_untranslated); });
  row("loc_err_mean_m", [](const ArmOutcome& a) { return format_double(a.metrics.loc.mean); });
  row("loc_err_median_m", [](const ArmOutcome& a) { return format_double(a.metrics.loc.median); });
  row("loc_err_untranslated_mean_m",
      [](const ArmOutcome& a) { return format_double(a.metrics.loc_untranslated.mean); });
  row("final_total_loss", [](const ArmOutcome& a) {
    return a.manifest.rows.empty() ? std::string("nan") : format_double(a.manifest.rows.back().total);
  });
}

}  // namespace capit
