#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fslab/config.hpp"
#include "fslab/metrics.hpp"
#include "fslab/network.hpp"
#include "fslab/trainer.hpp"

namespace fslab {

struct EvalResult {
  MetricReport report;
  double seconds_per_frame = 0.0;  // wall-clock inference only, not written to report.json
};

/// Runs inference at `input_size` on every sample, resizes the selected map
/// back to mask size and scores it. With a non-empty `out_dir`, writes
/// report.json, pr_curve.csv, binary masks (masks/) and saliency maps (maps/).
EvalResult evaluate(const FsNet& net, const RunConfig& config,
                    const std::vector<TrainingSample>& samples, PredictionHead head,
                    const std::filesystem::path& out_dir);

/// Loads `checkpoint` into a network built from `config` (hash must match)
/// and evaluates `split` of the configured corpus.
EvalResult evaluate_checkpoint(const RunConfig& config, const std::filesystem::path& checkpoint,
                               const std::string& split, const std::filesystem::path& out_dir);

}  // namespace fslab
