// fslab: corpus generation, training, evaluation, ablation and PR export.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure, 1 other.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fslab/ablate.hpp"
#include "fslab/config.hpp"
#include "fslab/evaluate.hpp"
#include "fslab/report_io.hpp"
#include "fslab/synthdata.hpp"
#include "fslab/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

fslab::RunConfig load_with_overrides(const fs::path& path, const std::string& corpus,
                                     const std::string& out) {
  fslab::RunConfig config = fslab::load_run_config(path);
  if (!corpus.empty()) config.corpus = corpus;
  if (!out.empty()) config.output_dir = out;
  return config;
}

void print_summary(const fslab::MetricReport& r) {
  std::printf("clips %zu  frames %zu\n", r.clips.size(), r.frames.size());
  std::printf("Mean-J %.4f  Mean-F %.4f  MAE %.4f\n", r.mean_j, r.mean_f, r.mae);
  std::printf("F-beta max %.4f  E-xi max %.4f  S-alpha %.4f\n", r.f_beta_max, r.e_max, r.s_alpha);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stream video object segmentation lab"};
  app.require_subcommand(1);

  // synth gen
  auto* synth = app.add_subcommand("synth", "Synthetic corpus tools");
  synth->require_subcommand(1);
  auto* gen = synth->add_subcommand("gen", "Render a moving-shapes corpus");
  fslab::CorpusConfig corpus;
  std::string synth_out;
  bool force = false;
  int size = 64;
  std::vector<double> ratios;
  gen->add_option("--clips", corpus.n_clips, "Number of clips")->check(CLI::PositiveNumber);
  gen->add_option("--seed", corpus.seed, "Corpus seed");
  gen->add_option("--out", synth_out, "Output directory")->required();
  gen->add_option("--size", size, "Canvas edge length")->check(CLI::PositiveNumber);
  gen->add_option("--frames", corpus.n_frames, "Frames per clip");
  gen->add_option("--split-ratios", ratios,
                  "pretrain-spatial,pretrain-temporal,train,val fractions")
      ->expected(4)
      ->delimiter(',');
  gen->add_flag("--force", force, "Overwrite a non-empty output directory");

  // train
  auto* train = app.add_subcommand("train", "Run the three-stage training schedule");
  std::string config_path, resume, corpus_override, out_override;
  train->add_option("--config", config_path, "Run config (JSON)")->required();
  train->add_option("--resume", resume, "Checkpoint to resume from");
  train->add_option("--corpus", corpus_override, "Override the corpus path");
  train->add_option("--out", out_override, "Override the output directory");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  std::string checkpoint, split = "val", eval_out, head;
  eval->add_option("--config", config_path, "Run config (JSON)")->required();
  eval->add_option("--checkpoint", checkpoint, "Checkpoint (default: <output_dir>/checkpoints/joint.ckpt)");
  eval->add_option("--split", split, "Corpus split");
  eval->add_option("--out", eval_out, "Report directory (default: <output_dir>/eval-<split>)");
  eval->add_option("--corpus", corpus_override, "Override the corpus path");
  eval->add_option("--head", head, "Prediction head: SA, SM or mean");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate a sweep of variants");
  std::vector<int> ns{0, 2, 4};
  std::vector<std::string> bpm_modes{"simplex-GtoF", "full-duplex"};
  std::vector<std::string> rcam_modes{"full-duplex"};
  bool directions = false;
  std::string ablate_out;
  ablate->add_option("--config", config_path, "Base run config (JSON)")->required();
  ablate->add_option("--out", ablate_out, "Output directory")->required();
  ablate->add_option("--corpus", corpus_override, "Override the corpus path");
  ablate->add_option("--n", ns, "BPM unit counts")->delimiter(',');
  ablate->add_option("--bpm-mode", bpm_modes, "BPM directions")->delimiter(',');
  ablate->add_option("--rcam-mode", rcam_modes, "RCAM directions")->delimiter(',');
  ablate->add_flag("--directions", directions,
                   "Use the six direction settings (four simplex, self-purification, full-duplex) "
                   "at the first --n value");

  // export-pr
  auto* export_pr = app.add_subcommand("export-pr", "Write PR curves of reports to one CSV");
  std::vector<std::string> reports, labels;
  std::string pr_out;
  export_pr->add_option("--report", reports, "report.json files")->required();
  export_pr->add_option("--label", labels, "One label per report");
  export_pr->add_option("--out", pr_out, "CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (gen->parsed()) {
      corpus.height = corpus.width = size;
      if (!ratios.empty()) std::copy(ratios.begin(), ratios.end(), corpus.split_ratios.begin());
      const auto manifest = fslab::build_corpus(corpus, synth_out, force);
      for (const char* name : fslab::kSplitNames) {
        std::printf("%-18s %zu clips\n", name, manifest.split(name).size());
      }
      return 0;
    }
    if (train->parsed()) {
      const auto config = load_with_overrides(config_path, corpus_override, out_override);
      if (config.output_dir.empty()) throw fslab::ConfigError("config has no output_dir");
      fs::create_directories(config.output_dir);
      std::ofstream(config.output_dir / "config.json") << fslab::to_json_string(config) << "\n";
      fslab::Trainer trainer(config, &std::cout);
      const auto outcome =
          trainer.run(resume.empty() ? std::nullopt : std::optional<fs::path>(resume));
      std::printf("final checkpoint %s\n", outcome.final_checkpoint.string().c_str());
      return 0;
    }
    if (eval->parsed()) {
      auto config = load_with_overrides(config_path, corpus_override, "");
      if (!head.empty()) config.prediction_head = fslab::prediction_head_from_string(head);
      const fs::path ckpt =
          checkpoint.empty() ? config.output_dir / "checkpoints" / "joint.ckpt" : fs::path(checkpoint);
      const fs::path out = eval_out.empty() ? config.output_dir / ("eval-" + split) : fs::path(eval_out);
      const auto result = fslab::evaluate_checkpoint(config, ckpt, split, out);
      print_summary(result.report);
      std::printf("runtime %.4f s/frame\nreport %s\n", result.seconds_per_frame,
                  (out / "report.json").string().c_str());
      return 0;
    }
    if (ablate->parsed()) {
      const auto config = load_with_overrides(config_path, corpus_override, "");
      std::vector<fslab::AblationVariant> variants;
      if (directions) {
        variants = fslab::direction_variants(ns.empty() ? 4 : ns.front());
      } else {
        std::vector<fslab::RcamMode> r;
        std::vector<fslab::BpmMode> b;
        for (const auto& s : rcam_modes) r.push_back(fslab::rcam_mode_from_string(s));
        for (const auto& s : bpm_modes) b.push_back(fslab::bpm_mode_from_string(s));
        variants = fslab::sweep(r, b, ns);
      }
      const auto rows = fslab::run_ablation(config, variants, ablate_out, &std::cout);
      std::printf("%zu variants -> %s\n", rows.size(),
                  (fs::path(ablate_out) / "ablation.csv").string().c_str());
      return 0;
    }
    if (export_pr->parsed()) {
      std::vector<fs::path> paths(reports.begin(), reports.end());
      fslab::export_pr(paths, labels, pr_out);
      return 0;
    }
  } catch (const fslab::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const fslab::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const fslab::ContractError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
