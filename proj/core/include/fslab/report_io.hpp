#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "fslab/metrics.hpp"

namespace fslab {

/// Dataset values, per-clip means, per-frame values and the mean PR curve.
void write_report_json(const MetricReport& report, const std::filesystem::path& path);
MetricReport read_report_json(const std::filesystem::path& path);

using PrSeries = std::pair<std::string, PrCurve>;

/// One series: columns threshold,precision,recall. Several series: a leading
/// variant column labels each block of 256 rows.
void write_pr_csv(const std::vector<PrSeries>& series, const std::filesystem::path& path);
std::vector<PrSeries> read_pr_csv(const std::filesystem::path& path);

/// Reads report.json files and writes their PR curves to one CSV. Labels
/// default to the parent directory name of each report.
void export_pr(const std::vector<std::filesystem::path>& reports,
               const std::vector<std::string>& labels, const std::filesystem::path& out);

}  // namespace fslab
