#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "seqattr/config.hpp"

namespace seqattr {

// Names used for the two combined-explanation rows every benchmark carries
// alongside the configured baseline methods.
inline constexpr std::string_view kStrExpGlobalLocalName = "StrExp-GL";
inline constexpr std::string_view kStrExpLocalName = "StrExp-L";

struct BenchmarkRow {
  std::string method;
  std::string dataset;
  Metric metric = Metric::Accuracy;
  double auc = 0.0;
  int n_images = 0;
  std::uint64_t seed = 0;
  // Per-image y-values of the selectivity curve, present when the run was
  // configured to keep curves.
  std::vector<std::vector<double>> curves;
};

struct BenchmarkReport {
  RunConfig config;
  std::vector<BenchmarkRow> rows;
  // dataset name -> base method the combined rows used (resolved per dataset)
  std::vector<std::pair<std::string, std::string>> strexp_base;
};

// Runs the full grid (configured methods plus StrExp-GL / StrExp-L when
// enabled) over every dataset. All randomness derives from cfg.seed through
// fixed per-dataset / per-method / per-image streams, so the report is
// byte-reproducible and independent of the thread count. `log`, when given,
// receives one progress line per (dataset, method).
BenchmarkReport run_benchmark(const RunConfig& cfg, std::ostream* log = nullptr);

// Serializers. Both write atomically (temp file + rename). The JSON layout
// is documented in the README; rerunning the same config yields identical
// bytes.
void write_report_json(const std::filesystem::path& path, const BenchmarkReport& report);
void write_report_csv(const std::filesystem::path& path, const BenchmarkReport& report);

}  // namespace seqattr
