#include "seqattr/strexp.hpp"

#include <cmath>
#include <stdexcept>

#include "seqattr/rng.hpp"

namespace seqattr {
namespace {

constexpr double kZeroNorm = 1e-12;
// Distinct seed stream for the calibration ranking inside strexp_explain.
constexpr std::uint64_t kCalibrationStream = 0xca11b7a7e5eedULL;

}  // namespace

AttributionMap global_explanation(const SlotNet& model, const Image& img,
                                  MethodId method, const MethodParams& params,
                                  const SegmentMap& seg, double baseline) {
  ExplainRequest req;
  req.image = img;
  req.spec = GlobalScore{decode(forward_output(model, img)).slot_argmax};
  req.segments = seg;
  req.baseline = baseline;
  return explain(method, model, req, params);
}

std::vector<LocalMap> local_explanations(const SlotNet& model, const Image& img,
                                         MethodId method, const MethodParams& params,
                                         const SegmentMap& seg, double baseline,
                                         bool include_blank_slots) {
  const Decoded frozen = decode(forward_output(model, img));
  std::vector<LocalMap> locals;
  for (int k = 0; k < kSlots; ++k) {
    const int cls = frozen.slot_argmax[static_cast<std::size_t>(k)];
    if (cls == kBlankClass && !include_blank_slots) continue;
    MethodParams p = params;
    p.seed = derive_seed(params.seed, static_cast<std::uint64_t>(k) + 1);
    ExplainRequest req;
    req.image = img;
    req.spec = LocalScore{k, cls};
    req.segments = seg;
    req.baseline = baseline;
    locals.push_back(LocalMap{k, cls, explain(method, model, req, p)});
  }
  return locals;
}

AttributionMap combine(const std::optional<AttributionMap>& global,
                       const std::vector<AttributionMap>& locals,
                       Normalization normalization) {
  std::vector<const AttributionMap*> components;
  if (global) components.push_back(&*global);
  for (const AttributionMap& m : locals) components.push_back(&m);
  if (components.empty())
    throw std::invalid_argument("combine requires at least one component map");

  const int h = components.front()->height, w = components.front()->width;
  for (const AttributionMap* m : components)
    if (m->height != h || m->width != w)
      throw std::invalid_argument("component map dims differ");

  AttributionMap out(h, w);
  for (const AttributionMap* m : components) {
    double scale = 1.0;
    if (normalization == Normalization::Linf) {
      double peak = 0.0;
      for (double v : m->values) peak = std::max(peak, std::abs(v));
      if (peak < kZeroNorm) continue;  // contributes zeros
      scale = 1.0 / peak;
    }
    for (std::size_t i = 0; i < out.values.size(); ++i)
      out.values[i] += scale * m->values[i];
  }
  const double inv = 1.0 / static_cast<double>(components.size());
  for (double& v : out.values) v *= inv;
  return out;
}

StrExpResult strexp_explain(const SlotNet& model, const Image& img,
                            const StrExpConfig& cfg, const MethodParams& params,
                            const SegmentMap& seg, double baseline,
                            const std::vector<Sample>* calibration) {
  StrExpResult result;
  if (cfg.base_method) {
    result.base_method = *cfg.base_method;
  } else {
    if (!calibration || calibration->empty())
      throw std::invalid_argument(
          "automatic base method selection needs a calibration dataset");
    result.base_method =
        query_best(model, *calibration, list_methods(), params, seg, baseline,
                   Metric::Confidence, derive_seed(params.seed, kCalibrationStream))
            .best;
  }

  result.local_maps = local_explanations(model, img, result.base_method, params,
                                         seg, baseline, cfg.include_blank_slots);
  if (result.local_maps.empty())
    result.local_maps = local_explanations(model, img, result.base_method, params,
                                           seg, baseline, /*include_blank_slots=*/true);

  if (cfg.mode == StrExpMode::GlobalLocal)
    result.global_map =
        global_explanation(model, img, result.base_method, params, seg, baseline);

  std::vector<AttributionMap> local_values;
  local_values.reserve(result.local_maps.size());
  for (const LocalMap& lm : result.local_maps) local_values.push_back(lm.map);
  result.final_map = combine(result.global_map, local_values, cfg.normalization);
  return result;
}

}  // namespace seqattr
