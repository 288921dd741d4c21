#include "seqattr/benchmark.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "seqattr/kernels.hpp"
#include "seqattr/rng.hpp"

namespace seqattr {
namespace {

// Seed streams hanging off derive_seed(cfg.seed, dataset_index). Baseline
// method m uses stream m; the combined-explanation rows and the per-dataset
// base-method ranking use dedicated constants far outside the method range.
constexpr std::uint64_t kStrExpStream = 0x57e2ef00ULL;
constexpr std::uint64_t kRankingStream = 0xbe575eedULL;

void atomic_write(const std::filesystem::path& path, const std::string& body) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<std::vector<double>> collect_curves(const std::vector<CurvePair>& pairs,
                                                Metric metric) {
  std::vector<std::vector<double>> out;
  out.reserve(pairs.size());
  for (const CurvePair& p : pairs)
    out.push_back(metric == Metric::Accuracy ? p.accuracy.ys : p.confidence.ys);
  return out;
}

void append_rows(BenchmarkReport& report, const RunConfig& cfg,
                 const std::string& method, const std::string& dataset,
                 const std::vector<CurvePair>& pairs) {
  for (Metric metric : cfg.metrics) {
    BenchmarkRow row;
    row.method = method;
    row.dataset = dataset;
    row.metric = metric;
    double sum = 0.0;
    for (const CurvePair& p : pairs)
      sum += metric == Metric::Accuracy ? p.accuracy.auc : p.confidence.auc;
    row.auc = sum / static_cast<double>(pairs.size());
    row.n_images = static_cast<int>(pairs.size());
    row.seed = cfg.seed;
    if (cfg.write_curves) row.curves = collect_curves(pairs, metric);
    report.rows.push_back(std::move(row));
  }
}

const std::string* find_calibration(const RunConfig& cfg, const std::string& name) {
  for (const auto& [n, dir] : cfg.calibration)
    if (n == name) return &dir;
  return nullptr;
}

}  // namespace

BenchmarkReport run_benchmark(const RunConfig& cfg, std::ostream* log) {
  const SlotNet model = load_model(cfg.model_path);
  const SegmentMap seg = grid_segmentation(kImageHeight, kImageWidth, cfg.segment_cell);

  BenchmarkReport report;
  report.config = cfg;

  for (std::size_t d = 0; d < cfg.datasets.size(); ++d) {
    const auto& [ds_name, ds_dir] = cfg.datasets[d];
    const std::vector<Sample> samples = load_dataset(ds_dir);
    if (samples.empty())
      throw std::runtime_error("dataset is empty: " + ds_dir);
    const std::uint64_t ds_seed = derive_seed(cfg.seed, d);

    for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
      const MethodId method = cfg.methods[m];
      DatasetEval eval = evaluate_method(model, samples, method, cfg.params, seg,
                                         cfg.baseline, derive_seed(ds_seed, m));
      append_rows(report, cfg, std::string(method_name(method)), ds_name,
                  eval.per_image);
      if (log)
        *log << ds_name << " " << method_name(method)
             << " acc_auc=" << eval.mean_auc(Metric::Accuracy)
             << " conf_auc=" << eval.mean_auc(Metric::Confidence) << "\n";
    }

    if (cfg.strexp_enabled) {
      MethodId base;
      if (cfg.strexp.base_method) {
        base = *cfg.strexp.base_method;
      } else {
        const std::string* calib_dir = find_calibration(cfg, ds_name);
        if (!calib_dir)
          throw ConfigError("config error: strexp base_method is auto but no "
                            "[calibration] entry for dataset \"" + ds_name + "\"");
        const std::vector<Sample> calib = load_dataset(*calib_dir);
        base = query_best(model, calib, list_methods(), cfg.params, seg, cfg.baseline,
                          Metric::Confidence, derive_seed(ds_seed, kRankingStream))
                   .best;
      }
      report.strexp_base.emplace_back(ds_name, std::string(method_name(base)));
      if (log) *log << ds_name << " strexp base=" << method_name(base) << "\n";

      const std::uint64_t strexp_seed = derive_seed(ds_seed, kStrExpStream);
      std::vector<CurvePair> gl(samples.size()), lo(samples.size());
#pragma omp parallel for schedule(dynamic) num_threads(kernels::thread_count())
      for (long i = 0; i < static_cast<long>(samples.size()); ++i) {
        const Sample& s = samples[static_cast<std::size_t>(i)];
        MethodParams p = cfg.params;
        p.seed = derive_seed(strexp_seed, static_cast<std::uint64_t>(i));
        std::vector<LocalMap> locals =
            local_explanations(model, s.image, base, p, seg, cfg.baseline,
                               cfg.strexp.include_blank_slots);
        if (locals.empty())
          locals = local_explanations(model, s.image, base, p, seg, cfg.baseline,
                                      /*include_blank_slots=*/true);
        const AttributionMap global =
            global_explanation(model, s.image, base, p, seg, cfg.baseline);
        std::vector<AttributionMap> local_values;
        local_values.reserve(locals.size());
        for (const LocalMap& lm : locals) local_values.push_back(lm.map);

        const AttributionMap map_gl =
            combine(global, local_values, cfg.strexp.normalization);
        const AttributionMap map_l =
            combine(std::nullopt, local_values, cfg.strexp.normalization);
        gl[static_cast<std::size_t>(i)] =
            selectivity_curves(model, s, map_gl, seg, cfg.baseline);
        lo[static_cast<std::size_t>(i)] =
            selectivity_curves(model, s, map_l, seg, cfg.baseline);
      }
      append_rows(report, cfg, std::string(kStrExpGlobalLocalName), ds_name, gl);
      append_rows(report, cfg, std::string(kStrExpLocalName), ds_name, lo);
    }
  }
  return report;
}

void write_report_json(const std::filesystem::path& path, const BenchmarkReport& report) {
  nlohmann::json j;
  j["schema"] = "seqattr-benchmark-v1";
  j["config"] = format_run_config(report.config);

  nlohmann::json base = nlohmann::json::object();
  for (const auto& [ds, method] : report.strexp_base) base[ds] = method;
  j["strexp_base"] = base;

  nlohmann::json rows = nlohmann::json::array();
  for (const BenchmarkRow& r : report.rows) {
    nlohmann::json row;
    row["method"] = r.method;
    row["dataset"] = r.dataset;
    row["metric"] = std::string(metric_name(r.metric));
    row["auc"] = r.auc;
    row["n_images"] = r.n_images;
    row["seed"] = r.seed;
    if (!r.curves.empty()) row["curves"] = r.curves;
    rows.push_back(std::move(row));
  }
  j["results"] = std::move(rows);
  atomic_write(path, j.dump(2) + "\n");
}

void write_report_csv(const std::filesystem::path& path, const BenchmarkReport& report) {
  std::string body = "method,dataset,metric,auc,n_images,seed\n";
  char buf[64];
  for (const BenchmarkRow& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.auc);
    body += r.method + "," + r.dataset + "," + std::string(metric_name(r.metric)) +
            "," + buf + "," + std::to_string(r.n_images) + "," +
            std::to_string(r.seed) + "\n";
  }
  atomic_write(path, body);
}

}  // namespace seqattr
