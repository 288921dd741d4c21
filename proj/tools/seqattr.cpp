#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "seqattr/benchmark.hpp"
#include "seqattr/strexp.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace seqattr;

void atomic_write_text(const fs::path& path, const std::string& body) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
    out << body;
  }
  fs::rename(tmp, path);
}

// Forward-only view of a model, used to exercise the capability checks.
class ForwardOnlyScore final : public ScoreFunction {
 public:
  ForwardOnlyScore(const SlotNet& model, ScoreSpec spec)
      : model_(&model), spec_(std::move(spec)) {}
  double value(const Image& img) const override { return score(*model_, img, spec_); }

 private:
  const SlotNet* model_;
  ScoreSpec spec_;
};

struct SynthArgs {
  std::string name;
  int size = 0;
  std::string variant = "clean";
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

int cmd_synth(const SynthArgs& args) {
  auto variant = parse_variant(args.variant);
  if (!variant)
    throw ConfigError("unknown variant \"" + args.variant +
                      "\" (expected clean, noisy, distractor or lowcontrast)");
  DatasetSpec spec{args.name, args.size, *variant, args.seed};
  const std::vector<Sample> samples = generate_dataset(spec);
  const fs::path dir = fs::path(args.out_dir) / args.name;
  save_dataset(samples, dir);
  std::cout << "wrote " << samples.size() << " samples (" << variant_name(*variant)
            << ", seed " << args.seed << ") to " << dir.string() << "\n";
  return 0;
}

struct TrainArgs {
  std::string data_dir;
  std::string val_dir;
  std::string out_path = "model.sxm";
  double val_fraction = 0.1;
  TrainConfig cfg;
};

int cmd_train(const TrainArgs& args) {
  std::vector<Sample> data = load_dataset(args.data_dir);
  std::vector<Sample> val;
  if (!args.val_dir.empty()) {
    val = load_dataset(args.val_dir);
  } else {
    const std::size_t n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(static_cast<double>(data.size()) * args.val_fraction));
    if (n_val >= data.size())
      throw std::runtime_error("dataset too small to split a validation set");
    val.assign(data.end() - static_cast<std::ptrdiff_t>(n_val), data.end());
    data.resize(data.size() - n_val);
  }

  TrainResult result = train(SlotNet::random_init(args.cfg.seed), data, args.cfg);
  save_model(args.out_path, result.model);
  const double acc = exact_match(result.model, val);
  std::cout << "model=" << args.out_path << " train_samples=" << data.size()
            << " val_samples=" << val.size() << " epochs=" << args.cfg.epochs
            << " final_loss="
            << (result.loss_history.empty() ? 0.0 : result.loss_history.back())
            << " val_exact_match=" << acc << "\n";
  return 0;
}

struct ExplainArgs {
  std::string model_path;
  std::string image_path;
  std::string method = "Saliency";
  std::string out_dir = "explain_out";
  int cell = 8;
  double baseline = 0.0;
  bool no_grad = false;
  std::string base_method = "auto";
  std::string normalization = "linf";
  bool include_blank_slots = false;
  std::string calib_dir;
  MethodParams params;
};

int cmd_explain(const ExplainArgs& args) {
  const SlotNet model = load_model(args.model_path);
  const Image img = read_pgm(args.image_path);
  if (img.height != kImageHeight || img.width != kImageWidth)
    throw std::runtime_error("input image must be 32x128");
  const SegmentMap seg = grid_segmentation(kImageHeight, kImageWidth, args.cell);

  const ModelOutput out0 = forward_output(model, img);
  const Decoded frozen = decode(out0);

  fs::create_directories(args.out_dir);
  json sidecar;
  sidecar["model"] = args.model_path;
  sidecar["image"] = args.image_path;
  sidecar["method"] = args.method;
  sidecar["baseline"] = args.baseline;
  sidecar["segment_cell"] = args.cell;
  sidecar["seed"] = args.params.seed;
  sidecar["predicted_text"] = frozen.text;
  json slot_classes = json::array(), slot_confidences = json::array();
  for (int k = 0; k < kSlots; ++k) {
    const int cls = frozen.slot_argmax[static_cast<std::size_t>(k)];
    slot_classes.push_back(cls);
    slot_confidences.push_back(out0.prob(k, cls));
  }
  sidecar["slot_classes"] = slot_classes;
  sidecar["slot_confidences"] = slot_confidences;
  sidecar["params"] = {
      {"ig_steps", args.params.ig_steps},
      {"gradshap_samples", args.params.gradshap_samples},
      {"gradshap_sigma", args.params.gradshap_sigma},
      {"lime_samples", args.params.lime_samples},
      {"lime_ridge", args.params.lime_ridge},
      {"lime_kernel_width", args.params.lime_kernel_width},
      {"kernelshap_samples", args.params.kernelshap_samples},
      {"shapley_permutations", args.params.shapley_permutations},
  };

  std::vector<std::string> files;
  AttributionMap primary;

  if (args.method == "strexp-gl" || args.method == "strexp-l") {
    StrExpConfig cfg;
    cfg.mode = args.method == "strexp-gl" ? StrExpMode::GlobalLocal
                                          : StrExpMode::LocalOnly;
    if (args.base_method != "auto") {
      auto id = parse_method(args.base_method);
      if (!id) throw ConfigError("unknown base method \"" + args.base_method + "\"");
      cfg.base_method = *id;
    }
    if (args.normalization == "linf") cfg.normalization = Normalization::Linf;
    else if (args.normalization == "none") cfg.normalization = Normalization::None;
    else throw ConfigError("normalization must be linf or none");
    cfg.include_blank_slots = args.include_blank_slots;

    std::vector<Sample> calib;
    if (!cfg.base_method) {
      if (args.calib_dir.empty())
        throw ConfigError("--base-method auto requires --calib <dataset dir>");
      calib = load_dataset(args.calib_dir);
    }
    const StrExpResult result = strexp_explain(model, img, cfg, args.params, seg,
                                               args.baseline,
                                               calib.empty() ? nullptr : &calib);
    primary = result.final_map;

    write_ppm(fs::path(args.out_dir) / "final.ppm", render_heatmap(img, result.final_map));
    files.push_back("final.ppm");
    if (result.global_map) {
      write_ppm(fs::path(args.out_dir) / "global.ppm",
                render_heatmap(img, *result.global_map));
      files.push_back("global.ppm");
    }
    json locals = json::array();
    for (const LocalMap& lm : result.local_maps) {
      const std::string cls_name =
          lm.target_class == kBlankClass ? "blank" : std::string(1, class_to_char(lm.target_class));
      const std::string name =
          "local_slot" + std::to_string(lm.slot) + "_" + cls_name + ".ppm";
      write_ppm(fs::path(args.out_dir) / name, render_heatmap(img, lm.map));
      files.push_back(name);
      locals.push_back({{"slot", lm.slot}, {"class", lm.target_class}, {"file", name}});
    }
    sidecar["strexp"] = {
        {"base_method", std::string(method_name(result.base_method))},
        {"mode", args.method == "strexp-gl" ? "GL" : "L"},
        {"normalization", args.normalization},
        {"locals", locals},
    };
  } else {
    auto id = parse_method(args.method);
    if (!id)
      throw ConfigError("unknown method \"" + args.method +
                        "\" (or use strexp-gl / strexp-l)");
    ExplainRequest req;
    req.image = img;
    req.spec = GlobalScore{frozen.slot_argmax};
    req.segments = seg;
    req.baseline = args.baseline;
    if (args.no_grad) {
      ForwardOnlyScore fn(model, req.spec);
      primary = explain(*id, fn, req, args.params);
    } else {
      primary = explain(*id, model, req, args.params);
    }
    write_ppm(fs::path(args.out_dir) / "heatmap.ppm", render_heatmap(img, primary));
    files.push_back("heatmap.ppm");
  }

  sidecar["segment_scores"] = segment_means(primary, seg).scores;
  sidecar["files"] = files;
  atomic_write_text(fs::path(args.out_dir) / "explain.json", sidecar.dump(2) + "\n");
  std::cout << "explained " << args.image_path << " -> " << args.out_dir << " ("
            << files.size() << " heatmaps, predicted \"" << frozen.text << "\")\n";
  return 0;
}

int cmd_benchmark(const std::string& config_path, bool curves) {
  RunConfig cfg = parse_run_config(config_path);
  if (curves) cfg.write_curves = true;
  const BenchmarkReport report = run_benchmark(cfg, &std::cerr);
  fs::create_directories(cfg.output_dir);
  const fs::path json_path = fs::path(cfg.output_dir) / "benchmark.json";
  const fs::path csv_path = fs::path(cfg.output_dir) / "benchmark.csv";
  write_report_json(json_path, report);
  write_report_csv(csv_path, report);
  std::cout << "wrote " << report.rows.size() << " rows to " << json_path.string()
            << " and " << csv_path.string() << "\n";
  return 0;
}

int cmd_query_best(const std::string& config_path, const std::string& metric_name_arg) {
  RunConfig cfg = parse_run_config(config_path);
  auto metric = parse_metric(metric_name_arg);
  if (!metric) throw ConfigError("unknown metric \"" + metric_name_arg + "\"");

  const SlotNet model = load_model(cfg.model_path);
  const SegmentMap seg = grid_segmentation(kImageHeight, kImageWidth, cfg.segment_cell);
  for (std::size_t d = 0; d < cfg.datasets.size(); ++d) {
    const auto& [name, dir] = cfg.datasets[d];
    const std::vector<Sample> samples = load_dataset(dir);
    const MethodRanking ranking =
        query_best(model, samples, cfg.methods, cfg.params, seg, cfg.baseline,
                   *metric, derive_seed(cfg.seed, d));
    std::cout << "dataset " << name << " (" << samples.size() << " images, metric "
              << metric_name_arg << ")\n";
    for (std::size_t m = 0; m < ranking.methods.size(); ++m) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.17g", ranking.aggregate_auc[m]);
      std::cout << "  " << method_name(ranking.methods[m]) << " auc=" << buf << "\n";
    }
    std::cout << "  best = " << method_name(ranking.best) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attribution explanations and selectivity benchmarks for a slot-based text recognizer"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--name", synth_args.name, "dataset name (output subdirectory)")->required();
  synth->add_option("--size", synth_args.size, "number of samples")
      ->required()
      ->check(CLI::PositiveNumber);
  synth->add_option("--variant", synth_args.variant, "clean|noisy|distractor|lowcontrast");
  synth->add_option("--seed", synth_args.seed, "RNG seed");
  synth->add_option("--out", synth_args.out_dir, "parent output directory");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train the recognizer");
  train_cmd->add_option("--data", train_args.data_dir, "training dataset directory")->required();
  train_cmd->add_option("--val", train_args.val_dir, "validation dataset directory");
  train_cmd->add_option("--out", train_args.out_path, "output model path");
  train_cmd->add_option("--val-fraction", train_args.val_fraction, "held-out fraction when --val is absent");
  train_cmd->add_option("--epochs", train_args.cfg.epochs, "training epochs");
  train_cmd->add_option("--lr", train_args.cfg.learning_rate, "learning rate");
  train_cmd->add_option("--momentum", train_args.cfg.momentum, "SGD momentum");
  train_cmd->add_option("--batch", train_args.cfg.batch_size, "batch size");
  train_cmd->add_option("--seed", train_args.cfg.seed, "RNG seed");

  ExplainArgs explain_args;
  auto* explain_cmd = app.add_subcommand("explain", "Explain one image");
  explain_cmd->add_option("--model", explain_args.model_path, "model file")->required();
  explain_cmd->add_option("--image", explain_args.image_path, "input PGM image")->required();
  explain_cmd->add_option("--method", explain_args.method,
                          "attribution method name, strexp-gl or strexp-l");
  explain_cmd->add_option("--out", explain_args.out_dir, "output directory");
  explain_cmd->add_option("--cell", explain_args.cell, "segmentation cell size");
  explain_cmd->add_option("--baseline", explain_args.baseline, "masking intensity");
  explain_cmd->add_option("--seed", explain_args.params.seed, "RNG seed");
  explain_cmd->add_flag("--no-grad", explain_args.no_grad,
                        "treat the model as forward-only");
  explain_cmd->add_option("--base-method", explain_args.base_method,
                          "strexp base method name or auto");
  explain_cmd->add_option("--normalization", explain_args.normalization, "linf|none");
  explain_cmd->add_flag("--include-blank-slots", explain_args.include_blank_slots,
                        "also explain blank slots");
  explain_cmd->add_option("--calib", explain_args.calib_dir,
                          "calibration dataset for --base-method auto");
  explain_cmd->add_option("--ig-steps", explain_args.params.ig_steps, "IntegratedGradients steps");
  explain_cmd->add_option("--gradshap-samples", explain_args.params.gradshap_samples, "GradientSHAP samples");
  explain_cmd->add_option("--lime-samples", explain_args.params.lime_samples, "LIME samples");
  explain_cmd->add_option("--kernelshap-samples", explain_args.params.kernelshap_samples, "KernelSHAP samples");
  explain_cmd->add_option("--shapley-permutations", explain_args.params.shapley_permutations, "ShapleySampling permutations");

  std::string bench_config;
  bool bench_curves = false;
  auto* bench_cmd = app.add_subcommand("benchmark", "Run the full selectivity benchmark");
  bench_cmd->add_option("config", bench_config, "run config file")->required();
  bench_cmd->add_flag("--curves", bench_curves, "embed per-image curves in the JSON report");

  std::string qb_config, qb_metric = "confidence";
  auto* qb_cmd = app.add_subcommand("query-best", "Rank the configured methods by selectivity");
  qb_cmd->add_option("config", qb_config, "run config file")->required();
  qb_cmd->add_option("--metric", qb_metric, "accuracy|confidence");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_args);
    if (train_cmd->parsed()) return cmd_train(train_args);
    if (explain_cmd->parsed()) return cmd_explain(explain_args);
    if (bench_cmd->parsed()) return cmd_benchmark(bench_config, bench_curves);
    if (qb_cmd->parsed()) return cmd_query_best(qb_config, qb_metric);
  } catch (const seqattr::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
