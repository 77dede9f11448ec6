#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "fslab/config.hpp"

namespace fslab {

struct AblationVariant {
  RcamMode rcam_mode = RcamMode::kFullDuplex;
  BpmMode bpm_mode = BpmMode::kFullDuplex;
  int bpm_n = 4;

  /// "rcam=<mode>;bpm=<mode>;n=<N>".
  std::string label() const;
};

/// Cartesian product in rcam-major, bpm, then N order.
std::vector<AblationVariant> sweep(const std::vector<RcamMode>& rcam_modes,
                                   const std::vector<BpmMode>& bpm_modes,
                                   const std::vector<int>& bpm_ns);

/// The four simplex combinations, self-purification and full-duplex at `n` units.
std::vector<AblationVariant> direction_variants(int n = 4);

struct AblationRow {
  AblationVariant variant;
  std::size_t params = 0;      // whole network
  std::size_t bpm_params = 0;  // purification units only (0 at N = 0)
  std::uint64_t flops = 0;
  std::uint64_t bpm_flops = 0;
  double runtime_s_per_frame = 0.0;
  double mean_j = 0.0;
  double mean_f = 0.0;
  double mae = 0.0;
  double f_beta_max = 0.0;
  double e_max = 0.0;
  double s_alpha = 0.0;
};

/// Pretrains stages 1 and 2 once under `base`, then for every variant copies
/// those weights, trains the joint stage and evaluates the val split. Writes
/// <out_dir>/ablation.csv, <out_dir>/run_report.md and one sub-directory per variant.
std::vector<AblationRow> run_ablation(const RunConfig& base,
                                      const std::vector<AblationVariant>& variants,
                                      const std::filesystem::path& out_dir,
                                      std::ostream* log = nullptr);

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path);

struct UnitParameterComparison {
  std::size_t per_unit = 0;     // measured at the resnet50-like preset
  double published_per_unit = 0.0;  // implied by the published N = 2 and N = 4 totals
  double relative_deviation = 0.0;
};

UnitParameterComparison compare_unit_parameters();

/// Markdown summary of parameter structure, FLOPs and the per-unit comparison,
/// including the explanation required when the deviation exceeds 25%.
std::string structural_report(const std::vector<AblationRow>& rows);

}  // namespace fslab
