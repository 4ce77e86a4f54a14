#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "capit/eval.hpp"
#include "capit/synthdata.hpp"
#include "capit/training.hpp"

namespace capit {

/// Runs G over the source images of the given frames.
std::map<std::string, Image<double>> translate_frames(const Generator<TrainScalar>& G, const SynthDataset& ds,
                                                      const std::vector<std::string>& source_frames);

Image<double> translate_image(const Generator<TrainScalar>& G, const Image<double>& image);

struct ArmOutcome {
  std::string label;
  RunManifest manifest;
  MetricsReport metrics;
};

/// Trains one arm on the training split, translates the held-out sources
/// (the training sources when the held-out split is empty) and evaluates
/// them. Writes the run into out_dir plus `metrics.txt`.
ArmOutcome run_arm(const SynthDataset& ds, const AblationArm& arm, const std::string& out_dir,
                   const Embedder& embedder);

/// Table with one column per arm and one row per metric.
void write_ablation_report(std::ostream& out, const std::string& preset, const std::string& dataset_hash,
                           const std::vector<ArmOutcome>& arms);

}  // namespace capit
