#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "seqattr/attrib.hpp"
#include "seqattr/selectivity.hpp"
#include "seqattr/strexp.hpp"

namespace seqattr {

// Configuration / usage problems; the CLI maps these to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Benchmark run description, parsed from a flat INI-style file:
// "[section]" headers, "key = value" lines, '#' comments. Unknown sections
// or keys are parse errors (reported with their line number).
struct RunConfig {
  // [run]
  std::string model_path;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
  int segment_cell = 8;
  double baseline = 0.0;
  std::vector<Metric> metrics = {Metric::Accuracy, Metric::Confidence};
  bool write_curves = false;

  // [datasets] / [calibration]: name -> directory, in file order
  std::vector<std::pair<std::string, std::string>> datasets;
  std::vector<std::pair<std::string, std::string>> calibration;

  // [methods]
  std::vector<MethodId> methods;  // defaults to all eleven
  MethodParams params;

  // [strexp]
  bool strexp_enabled = true;
  StrExpConfig strexp;
};

RunConfig parse_run_config(const std::filesystem::path& path);

// The resolved config as the flat text it was parsed from (used to embed
// provenance in reports).
std::string format_run_config(const RunConfig& cfg);

}  // namespace seqattr
