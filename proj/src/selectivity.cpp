#include "seqattr/selectivity.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "seqattr/kernels.hpp"
#include "seqattr/rng.hpp"

namespace seqattr {

std::string_view metric_name(Metric m) {
  return m == Metric::Accuracy ? "accuracy" : "confidence";
}

std::optional<Metric> parse_metric(std::string_view name) {
  if (name == "accuracy") return Metric::Accuracy;
  if (name == "confidence") return Metric::Confidence;
  return std::nullopt;
}

double trapezoid_auc(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw std::invalid_argument("curve needs at least two matching points");
  double area = 0.0;
  for (std::size_t i = 1; i < xs.size(); ++i)
    area += (xs[i] - xs[i - 1]) * (ys[i] + ys[i - 1]) * 0.5;
  return area;
}

std::vector<int> segment_ranking(const SegmentScores& scores) {
  std::vector<int> order(scores.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double sa = scores.scores[static_cast<std::size_t>(a)];
    const double sb = scores.scores[static_cast<std::size_t>(b)];
    if (sa != sb) return sa > sb;
    return a < b;
  });
  return order;
}

CurvePair selectivity_curves(const SlotNet& model, const Sample& sample,
                             const AttributionMap& attr, const SegmentMap& seg,
                             double baseline) {
  if (attr.height != seg.height || attr.width != seg.width ||
      sample.image.height != seg.height || sample.image.width != seg.width)
    throw std::invalid_argument("sample/attribution/segment dims differ");

  const std::vector<int> order = segment_ranking(segment_means(attr, seg));
  const int m = seg.segment_count;

  const GlobalScore frozen{decode(forward_output(model, sample.image)).slot_argmax};
  const ScoreSpec conf_spec = frozen;

  CurvePair out;
  out.accuracy.xs.resize(static_cast<std::size_t>(m) + 1);
  out.accuracy.ys.resize(static_cast<std::size_t>(m) + 1);
  out.confidence.xs.resize(static_cast<std::size_t>(m) + 1);
  out.confidence.ys.resize(static_cast<std::size_t>(m) + 1);

  for (int t = 0; t <= m; ++t) {
    const std::vector<int> removed(order.begin(), order.begin() + t);
    const Image masked = mask_segments(sample.image, seg, removed, baseline);
    const ModelOutput o = forward_output(model, masked);
    const double x = static_cast<double>(t) / m;
    out.accuracy.xs[static_cast<std::size_t>(t)] = x;
    out.confidence.xs[static_cast<std::size_t>(t)] = x;
    out.accuracy.ys[static_cast<std::size_t>(t)] =
        decode(o).text == sample.label ? 1.0 : 0.0;
    out.confidence.ys[static_cast<std::size_t>(t)] = score_from_output(o, conf_spec);
  }
  out.accuracy.auc = trapezoid_auc(out.accuracy.xs, out.accuracy.ys);
  out.confidence.auc = trapezoid_auc(out.confidence.xs, out.confidence.ys);
  return out;
}

SelectivityCurve selectivity_curve(const SlotNet& model, const Sample& sample,
                                   const AttributionMap& attr, const SegmentMap& seg,
                                   double baseline, Metric metric) {
  CurvePair pair = selectivity_curves(model, sample, attr, seg, baseline);
  return metric == Metric::Accuracy ? std::move(pair.accuracy)
                                    : std::move(pair.confidence);
}

double DatasetEval::mean_auc(Metric m) const {
  if (per_image.empty()) throw std::invalid_argument("no evaluated images");
  double sum = 0.0;
  for (const CurvePair& p : per_image)
    sum += (m == Metric::Accuracy ? p.accuracy.auc : p.confidence.auc);
  return sum / static_cast<double>(per_image.size());
}

DatasetEval evaluate_method(const SlotNet& model, const std::vector<Sample>& samples,
                            MethodId method, const MethodParams& params,
                            const SegmentMap& seg, double baseline,
                            std::uint64_t seed_base) {
  if (samples.empty()) throw std::invalid_argument("dataset is empty");
  DatasetEval eval;
  eval.per_image.resize(samples.size());
#pragma omp parallel for schedule(dynamic) num_threads(kernels::thread_count())
  for (long i = 0; i < static_cast<long>(samples.size()); ++i) {
    const Sample& s = samples[static_cast<std::size_t>(i)];
    MethodParams p = params;
    p.seed = derive_seed(seed_base, static_cast<std::uint64_t>(i));
    ExplainRequest req;
    req.image = s.image;
    req.spec = GlobalScore{decode(forward_output(model, s.image)).slot_argmax};
    req.segments = seg;
    req.baseline = baseline;
    const AttributionMap map = explain(method, model, req, p);
    eval.per_image[static_cast<std::size_t>(i)] =
        selectivity_curves(model, s, map, seg, baseline);
  }
  return eval;
}

double dataset_selectivity(const SlotNet& model, const std::vector<Sample>& samples,
                           MethodId method, const MethodParams& params,
                           const SegmentMap& seg, double baseline, Metric metric,
                           std::uint64_t seed_base) {
  return evaluate_method(model, samples, method, params, seg, baseline, seed_base)
      .mean_auc(metric);
}

double dataset_selectivity(const SlotNet& model, const std::vector<Sample>& samples,
                           const std::vector<AttributionMap>& maps,
                           const SegmentMap& seg, double baseline, Metric metric) {
  if (samples.empty()) throw std::invalid_argument("dataset is empty");
  if (maps.size() != samples.size())
    throw std::invalid_argument("one attribution map per sample required");
  std::vector<double> aucs(samples.size());
#pragma omp parallel for schedule(dynamic) num_threads(kernels::thread_count())
  for (long i = 0; i < static_cast<long>(samples.size()); ++i)
    aucs[static_cast<std::size_t>(i)] =
        selectivity_curve(model, samples[static_cast<std::size_t>(i)],
                          maps[static_cast<std::size_t>(i)], seg, baseline, metric)
            .auc;
  double sum = 0.0;
  for (double a : aucs) sum += a;
  return sum / static_cast<double>(samples.size());
}

MethodRanking query_best(const SlotNet& model, const std::vector<Sample>& calibration,
                         const std::vector<MethodId>& methods,
                         const MethodParams& params, const SegmentMap& seg,
                         double baseline, Metric metric, std::uint64_t seed_base) {
  if (methods.empty()) throw std::invalid_argument("no methods to rank");
  if (calibration.empty()) throw std::invalid_argument("calibration dataset is empty");

  MethodRanking ranking;
  ranking.methods = methods;
  ranking.aggregate_auc.resize(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m)
    ranking.aggregate_auc[m] =
        dataset_selectivity(model, calibration, methods[m], params, seg, baseline,
                            metric, derive_seed(seed_base, m));

  // Lowest aggregate wins; ties resolve toward the earlier entry in the
  // canonical method order.
  const std::vector<MethodId> canon = list_methods();
  auto canon_pos = [&](MethodId id) {
    return std::find(canon.begin(), canon.end(), id) - canon.begin();
  };
  std::size_t best = 0;
  for (std::size_t m = 1; m < methods.size(); ++m) {
    if (ranking.aggregate_auc[m] < ranking.aggregate_auc[best] ||
        (ranking.aggregate_auc[m] == ranking.aggregate_auc[best] &&
         canon_pos(methods[m]) < canon_pos(methods[best])))
      best = m;
  }
  ranking.best = methods[best];
  return ranking;
}

}  // namespace seqattr
