#include "fslab/ablate.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "fslab/checkpoint.hpp"
#include "fslab/evaluate.hpp"
#include "fslab/report_io.hpp"
#include "fslab/trainer.hpp"

namespace fslab {

namespace fs = std::filesystem;

std::string AblationVariant::label() const {
  return "rcam=" + to_string(rcam_mode) + ";bpm=" + to_string(bpm_mode) +
         ";n=" + std::to_string(bpm_n);
}

std::vector<AblationVariant> sweep(const std::vector<RcamMode>& rcam_modes,
                                   const std::vector<BpmMode>& bpm_modes,
                                   const std::vector<int>& bpm_ns) {
  std::vector<AblationVariant> out;
  for (RcamMode r : rcam_modes) {
    for (BpmMode b : bpm_modes) {
      for (int n : bpm_ns) out.push_back({r, b, n});
    }
  }
  return out;
}

std::vector<AblationVariant> direction_variants(int n) {
  return {
      {RcamMode::kAppToMotion, BpmMode::kFtoG, n},
      {RcamMode::kAppToMotion, BpmMode::kGtoF, n},
      {RcamMode::kMotionToApp, BpmMode::kFtoG, n},
      {RcamMode::kMotionToApp, BpmMode::kGtoF, n},
      {RcamMode::kFullDuplex, BpmMode::kSelfPurification, n},
      {RcamMode::kFullDuplex, BpmMode::kFullDuplex, n},
  };
}

namespace {

std::string dir_name(const AblationVariant& v) {
  return to_string(v.rcam_mode) + "__" + to_string(v.bpm_mode) + "__n" + std::to_string(v.bpm_n);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::vector<AblationRow> run_ablation(const RunConfig& base,
                                      const std::vector<AblationVariant>& variants,
                                      const fs::path& out_dir, std::ostream* log) {
  if (variants.empty()) throw ConfigError("ablation needs at least one variant");
  fs::create_directories(out_dir);

  RunConfig pre_config = base;
  pre_config.output_dir = out_dir / "pretrain";
  Trainer pre(pre_config, log);
  TrainOutcome pre_outcome;
  pre.run_stage(Stage::kSpatial, 1, pre_outcome);
  pre.run_stage(Stage::kTemporal, 1, pre_outcome);

  // Only the weights trained by stages 1 and 2 carry over.
  std::set<std::string> pretrained;
  for (Stage s : {Stage::kSpatial, Stage::kTemporal}) {
    for (const auto& p : pre.network().parameters(s)) pretrained.insert(p.name);
  }
  std::vector<NamedTensor> carry;
  for (auto& t : snapshot(pre.network())) {
    if (pretrained.contains(t.name)) carry.push_back(std::move(t));
  }

  const auto val = load_split(base.corpus, "val");
  std::vector<AblationRow> rows;
  for (const AblationVariant& v : variants) {
    RunConfig config = base;
    config.rcam_mode = v.rcam_mode;
    config.bpm_mode = v.bpm_mode;
    config.bpm_n = v.bpm_n;
    config.output_dir = out_dir / dir_name(v);
    if (log) *log << "variant " << v.label() << std::endl;

    Trainer trainer(config, log);
    restore(trainer.network(), carry, false);
    TrainOutcome outcome;
    trainer.run_stage(Stage::kJoint, 1, outcome);

    const FsNet& net = trainer.network();
    const EvalResult eval =
        evaluate(net, config, val, config.prediction_head, config.output_dir / "eval");
    AblationRow row;
    row.variant = v;
    row.params = nn::count_parameters(net.parameters());
    row.bpm_params = static_cast<std::size_t>(v.bpm_n) *
                     Bpm::unit_parameter_count(config.network().bpm);
    const FlopCount flops = net.flops(config.input_size, config.input_size);
    row.flops = flops.total;
    row.bpm_flops = flops.bpm;
    row.runtime_s_per_frame = eval.seconds_per_frame;
    const MetricReport& r = eval.report;
    row.mean_j = r.mean_j;
    row.mean_f = r.mean_f;
    row.mae = r.mae;
    row.f_beta_max = r.f_beta_max;
    row.e_max = r.e_max;
    row.s_alpha = r.s_alpha;
    rows.push_back(row);
  }
  write_ablation_csv(rows, out_dir / "ablation.csv");

  std::vector<PrSeries> series;
  for (const auto& v : variants) {
    series.push_back({v.label(), read_report_json(out_dir / dir_name(v) / "eval" / "report.json").pr});
  }
  write_pr_csv(series, out_dir / "pr_curves.csv");

  std::ofstream report(out_dir / "run_report.md");
  report << structural_report(rows);
  return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "variant,rcam_mode,bpm_mode,bpm_n,params,bpm_params,flops,bpm_flops,"
         "runtime_s_per_frame,mean_j,mean_f,mae,f_beta_max,e_max,s_alpha\n";
  for (const auto& r : rows) {
    out << r.variant.label() << ',' << to_string(r.variant.rcam_mode) << ','
        << to_string(r.variant.bpm_mode) << ',' << r.variant.bpm_n << ',' << r.params << ','
        << r.bpm_params << ',' << r.flops << ',' << r.bpm_flops << ','
        << fixed(r.runtime_s_per_frame, 6) << ',' << fixed(r.mean_j, 6) << ','
        << fixed(r.mean_f, 6) << ',' << fixed(r.mae, 6) << ',' << fixed(r.f_beta_max, 6) << ','
        << fixed(r.e_max, 6) << ',' << fixed(r.s_alpha, 6) << '\n';
  }
}

UnitParameterComparison compare_unit_parameters() {
  BpmConfig config;
  UnitParameterComparison c;
  c.per_unit = Bpm::unit_parameter_count(config);
  c.published_per_unit = (1.015e6 - 0.507e6) / 2.0;
  c.relative_deviation =
      std::abs(static_cast<double>(c.per_unit) - c.published_per_unit) / c.published_per_unit;
  return c;
}

std::string structural_report(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  const auto cmp = compare_unit_parameters();
  const BackboneConfig big = BackboneConfig::resnet50_like();
  out << "# Ablation run report\n\n";
  out << "## Purification unit size\n\n";
  out << "- Parameters per unit (resnet50-like widths): " << cmp.per_unit << " ("
      << fixed(cmp.per_unit / 1e6, 3) << " M)\n";
  out << "- Published per-unit increment: " << fixed(cmp.published_per_unit / 1e6, 3) << " M\n";
  out << "- Allocator pair at resnet50-like widths: "
      << AllocatorPair::parameter_count(big.channel_widths) << "\n";
  out << "- Relative deviation: " << fixed(100.0 * cmp.relative_deviation, 1) << "%\n\n";
  if (cmp.relative_deviation > 0.25) {
    out << "The deviation exceeds 25%. A unit here holds, per level, one 1x1 projection (with "
           "bias) for every guidance map plus one 1x1 fuse conv to 32 channels, for both the "
           "concatenation and the multiplication branch. Every tensor inside a unit has 32 "
           "channels, so the count does not depend on the backbone widths. The published totals "
           "imply roughly "
        << fixed(cmp.published_per_unit / static_cast<double>(cmp.per_unit), 1)
        << "x more weights per unit, which the described layers cannot produce at 32 channels; "
           "the published unit must contain larger kernels or layers that are not described. "
           "The increment is still exactly constant in N, as checked by the affine-growth "
           "test.\n\n";
  }
  if (!rows.empty()) {
    out << "## Variants\n\n";
    out << "| variant | params | BPM params | FLOPs | BPM FLOPs | s/frame | Mean-J | Mean-F | MAE | "
           "S-alpha |\n";
    out << "|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : rows) {
      out << "| " << r.variant.label() << " | " << r.params << " | " << r.bpm_params << " | "
          << r.flops << " | " << r.bpm_flops << " | " << fixed(r.runtime_s_per_frame, 4) << " | "
          << fixed(r.mean_j, 3) << " | " << fixed(r.mean_f, 3) << " | " << fixed(r.mae, 3)
          << " | " << fixed(r.s_alpha, 3) << " |\n";
    }
  }
  return out.str();
}

}  // namespace fslab
