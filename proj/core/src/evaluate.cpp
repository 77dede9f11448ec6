#include "fslab/evaluate.hpp"

#include <chrono>

#include "fslab/checkpoint.hpp"
#include "fslab/report_io.hpp"

namespace fslab {

namespace fs = std::filesystem;
using ag::Var;

EvalResult evaluate(const FsNet& net, const RunConfig& config,
                    const std::vector<TrainingSample>& samples, PredictionHead head,
                    const fs::path& out_dir) {
  ag::NoGradGuard no_grad;
  const int size = config.input_size;
  std::vector<FrameMetrics> frames;
  double seconds = 0.0;
  for (const TrainingSample& s : samples) {
    const Var a = Var::constant(resize_image(s.appearance, size, size));
    const Var m = Var::constant(resize_image(s.motion, size, size));
    const auto start = std::chrono::steady_clock::now();
    const PredictionPair pred = net.forward(a, m);
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    Tensor map = resize_image(select_prediction(pred, head), s.gt.height(), s.gt.width());
    for (std::size_t i = 0; i < map.size(); ++i) map[i] = std::clamp(map[i], 0.0, 1.0);
    frames.push_back(evaluate_frame(s.clip_id, s.t, map, s.gt));
    if (!out_dir.empty()) {
      const std::string name = ClipLayout::index_name(s.t, "png");
      fs::create_directories(out_dir / "masks" / s.clip_id);
      fs::create_directories(out_dir / "maps" / s.clip_id);
      write_mask(map, out_dir / "masks" / s.clip_id / name, 0.5);
      write_mask(map, out_dir / "maps" / s.clip_id / name, std::nullopt);
    }
  }
  EvalResult result;
  result.report = aggregate(std::move(frames));
  result.seconds_per_frame = samples.empty() ? 0.0 : seconds / static_cast<double>(samples.size());
  if (!out_dir.empty()) {
    write_report_json(result.report, out_dir / "report.json");
    write_pr_csv({{"", result.report.pr}}, out_dir / "pr_curve.csv");
  }
  return result;
}

EvalResult evaluate_checkpoint(const RunConfig& config, const fs::path& checkpoint,
                               const std::string& split, const fs::path& out_dir) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  if (ckpt.config_hash != config_hash(config)) {
    throw ConfigError("checkpoint " + checkpoint.string() + " was written under a different config");
  }
  FsNet net(config.network());
  restore(net, ckpt.parameters);
  const auto samples = load_split(config.corpus, split);
  return evaluate(net, config, samples, config.prediction_head, out_dir);
}

}  // namespace fslab
