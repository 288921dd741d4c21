#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "seqattr/attrib.hpp"
#include "seqattr/image.hpp"
#include "seqattr/recognizer.hpp"
#include "seqattr/synthtext.hpp"

namespace seqattr {

// The two performance functions plotted while segments are removed:
// exact-match accuracy against the ground-truth label, and the mean
// confidence of the model's own frozen prediction.
enum class Metric { Accuracy, Confidence };

std::string_view metric_name(Metric m);
std::optional<Metric> parse_metric(std::string_view name);

struct SelectivityCurve {
  std::vector<double> xs;  // removal fractions 0..1, length m+1
  std::vector<double> ys;  // performance at each step
  double auc = 0.0;        // trapezoidal area under (xs, ys)
};

double trapezoid_auc(const std::vector<double>& xs, const std::vector<double>& ys);

// Segment ids ordered by descending mean attribution, ties toward the lower
// id. This ordering is what the removal schedule follows.
std::vector<int> segment_ranking(const SegmentScores& scores);

struct CurvePair {
  SelectivityCurve accuracy;
  SelectivityCurve confidence;
};

// Removes the top-ranked segments cumulatively, one more per step, running a
// fresh masked forward pass at every step. Both metrics are read off the
// same forward pass. The confidence target labels are frozen to the model's
// prediction on the unperturbed image.
CurvePair selectivity_curves(const SlotNet& model, const Sample& sample,
                             const AttributionMap& attr, const SegmentMap& seg,
                             double baseline);

SelectivityCurve selectivity_curve(const SlotNet& model, const Sample& sample,
                                   const AttributionMap& attr, const SegmentMap& seg,
                                   double baseline, Metric metric);

// One method evaluated over a dataset: per-image curves for both metrics.
// Image i explains with seed derive_seed(seed_base, i); evaluation order is
// parallel but the result is order-independent.
struct DatasetEval {
  std::vector<CurvePair> per_image;
  double mean_auc(Metric m) const;
};

DatasetEval evaluate_method(const SlotNet& model, const std::vector<Sample>& samples,
                            MethodId method, const MethodParams& params,
                            const SegmentMap& seg, double baseline,
                            std::uint64_t seed_base);

// Mean per-image AUC for one method / one metric.
double dataset_selectivity(const SlotNet& model, const std::vector<Sample>& samples,
                           MethodId method, const MethodParams& params,
                           const SegmentMap& seg, double baseline, Metric metric,
                           std::uint64_t seed_base);

// Same aggregate from precomputed per-image attribution maps.
double dataset_selectivity(const SlotNet& model, const std::vector<Sample>& samples,
                           const std::vector<AttributionMap>& maps,
                           const SegmentMap& seg, double baseline, Metric metric);

struct MethodRanking {
  std::vector<MethodId> methods;
  std::vector<double> aggregate_auc;  // one entry per method, same order
  MethodId best = MethodId::IntegratedGradients;
};

// Evaluates every method on the calibration set and picks the lowest mean
// AUC; ties resolve toward the earlier method in list_methods() order.
// Method m uses seed stream derive_seed(seed_base, m).
MethodRanking query_best(const SlotNet& model, const std::vector<Sample>& calibration,
                         const std::vector<MethodId>& methods,
                         const MethodParams& params, const SegmentMap& seg,
                         double baseline, Metric metric, std::uint64_t seed_base);

}  // namespace seqattr
