#include "fslab/report_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "fslab/config.hpp"
#include "json.hpp"

namespace fslab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json curve_json(const PrCurve& curve) {
  json precision = json::array(), recall = json::array();
  for (const PrPoint& p : curve) {
    precision.push_back(p.precision);
    recall.push_back(p.recall);
  }
  return {{"precision", precision}, {"recall", recall}};
}

PrCurve curve_from_json(const json& j) {
  const auto& precision = j.at("precision");
  const auto& recall = j.at("recall");
  if (precision.size() != kPrThresholds || recall.size() != kPrThresholds) {
    throw FormatError("pr curve must hold 256 entries");
  }
  PrCurve c{};
  for (int t = 0; t < kPrThresholds; ++t) {
    c[t].precision = precision[t].get<double>();
    c[t].recall = recall[t].get<double>();
  }
  return c;
}

std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_report_json(const MetricReport& r, const fs::path& path) {
  json j;
  j["dataset"] = {{"mean_j", r.mean_j},         {"mean_f", r.mean_f},   {"mae", r.mae},
                  {"f_beta_max", r.f_beta_max}, {"e_max", r.e_max},     {"s_alpha", r.s_alpha},
                  {"clips", r.clips.size()},    {"frames", r.frames.size()}};
  json clips = json::array();
  for (const auto& c : r.clips) {
    clips.push_back({{"clip", c.clip_id}, {"frames", c.frames}, {"mean_j", c.mean_j},
                     {"mean_f", c.mean_f}});
  }
  j["clips"] = clips;
  json frames = json::array();
  for (const auto& f : r.frames) {
    frames.push_back({{"clip", f.clip_id},
                      {"t", f.t},
                      {"j", f.j},
                      {"f", f.f},
                      {"mae", f.mae},
                      {"f_beta_max", f.f_beta_max},
                      {"e_max", f.e_max},
                      {"s_alpha", f.s_alpha},
                      {"pr", curve_json(f.pr)}});
  }
  j["frames"] = frames;
  j["pr_curve"] = curve_json(r.pr);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << "\n";
}

MetricReport read_report_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DecodeError("cannot open report " + path.string());
  MetricReport r;
  try {
    const json j = json::parse(in);
    const json& d = j.at("dataset");
    r.mean_j = d.at("mean_j");
    r.mean_f = d.at("mean_f");
    r.mae = d.at("mae");
    r.f_beta_max = d.at("f_beta_max");
    r.e_max = d.at("e_max");
    r.s_alpha = d.at("s_alpha");
    for (const auto& c : j.at("clips")) {
      r.clips.push_back({c.at("clip"), c.at("frames"), c.at("mean_j"), c.at("mean_f")});
    }
    for (const auto& f : j.at("frames")) {
      FrameMetrics m;
      m.clip_id = f.at("clip");
      m.t = f.at("t");
      m.j = f.at("j");
      m.f = f.at("f");
      m.mae = f.at("mae");
      m.f_beta_max = f.at("f_beta_max");
      m.e_max = f.at("e_max");
      m.s_alpha = f.at("s_alpha");
      m.pr = curve_from_json(f.at("pr"));
      r.frames.push_back(std::move(m));
    }
    r.pr = curve_from_json(j.at("pr_curve"));
  } catch (const json::exception& e) {
    throw FormatError("malformed report " + path.string() + ": " + e.what());
  }
  return r;
}

void write_pr_csv(const std::vector<PrSeries>& series, const fs::path& path) {
  if (series.empty()) throw ContractError("write_pr_csv: no series");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const bool labelled = series.size() > 1;
  out << (labelled ? "variant,threshold,precision,recall\n" : "threshold,precision,recall\n");
  for (const auto& [label, curve] : series) {
    for (int t = 0; t < kPrThresholds; ++t) {
      if (labelled) out << label << ',';
      out << t << ',' << number(curve[t].precision) << ',' << number(curve[t].recall) << '\n';
    }
  }
}

std::vector<PrSeries> read_pr_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DecodeError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty PR csv " + path.string());
  const bool labelled = line == "variant,threshold,precision,recall";
  if (!labelled && line != "threshold,precision,recall") {
    throw FormatError("unexpected PR csv header in " + path.string());
  }
  std::vector<PrSeries> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string label, field;
    if (labelled) std::getline(ss, label, ',');
    std::vector<std::string> cols;
    while (std::getline(ss, field, ',')) cols.push_back(field);
    if (cols.size() != 3) throw FormatError("bad PR csv row: " + line);
    const int t = std::stoi(cols[0]);
    if (t < 0 || t >= kPrThresholds) throw FormatError("bad threshold in PR csv: " + line);
    if (out.empty() || out.back().first != label || t == 0) {
      if (t != 0) throw FormatError("PR series must start at threshold 0");
      out.push_back({label, PrCurve{}});
    }
    out.back().second[t] = {std::stod(cols[1]), std::stod(cols[2])};
  }
  return out;
}

void export_pr(const std::vector<fs::path>& reports, const std::vector<std::string>& labels,
               const fs::path& out) {
  if (reports.empty()) throw ConfigError("export-pr needs at least one report");
  if (!labels.empty() && labels.size() != reports.size()) {
    throw ConfigError("export-pr: label count must match report count");
  }
  std::vector<PrSeries> series;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const std::string label =
        labels.empty() ? reports[i].parent_path().filename().string() : labels[i];
    series.push_back({label.empty() ? "report" + std::to_string(i) : label,
                      read_report_json(reports[i]).pr});
  }
  write_pr_csv(series, out);
}

}  // namespace fslab
