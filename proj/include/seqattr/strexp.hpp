#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "seqattr/attrib.hpp"
#include "seqattr/selectivity.hpp"

namespace seqattr {

enum class StrExpMode { GlobalLocal, LocalOnly };
enum class Normalization { Linf, None };

struct StrExpConfig {
  StrExpMode mode = StrExpMode::GlobalLocal;
  // Base attribution method; empty means pick the best one on a calibration
  // set via query_best.
  std::optional<MethodId> base_method;
  Normalization normalization = Normalization::Linf;
  bool include_blank_slots = false;
};

struct LocalMap {
  int slot = 0;
  int target_class = 0;  // frozen predicted class the map explains
  AttributionMap map;
};

struct StrExpResult {
  AttributionMap final_map;
  std::optional<AttributionMap> global_map;  // absent in LocalOnly mode
  std::vector<LocalMap> local_maps;          // ordered by slot
  MethodId base_method = MethodId::IntegratedGradients;
};

// Sequence-level explanation: the base method applied to the mean confidence
// of the model's frozen prediction.
AttributionMap global_explanation(const SlotNet& model, const Image& img,
                                  MethodId method, const MethodParams& params,
                                  const SegmentMap& seg, double baseline);

// One explanation per predicted character: the base method applied to that
// slot's frozen-class probability. Blank slots are skipped unless
// include_blank_slots. Local map for slot k uses seed
// derive_seed(params.seed, k + 1).
std::vector<LocalMap> local_explanations(const SlotNet& model, const Image& img,
                                         MethodId method, const MethodParams& params,
                                         const SegmentMap& seg, double baseline,
                                         bool include_blank_slots);

// Equal-weight pixelwise mean of the component maps. With Linf normalization
// each component is first scaled by its own max |value|; components with
// max |value| < 1e-12 contribute zeros. Throws if no components are given or
// dims disagree.
AttributionMap combine(const std::optional<AttributionMap>& global,
                       const std::vector<AttributionMap>& locals,
                       Normalization normalization);

// Full pipeline: resolve the base method (query_best on `calibration` when
// cfg.base_method is empty, ranking by selectivity confidence), compute the
// local maps (plus the global map in GlobalLocal mode) and combine them.
// If the frozen prediction has no non-blank slot, local maps fall back to
// covering all 8 slots so the combination is never empty.
StrExpResult strexp_explain(const SlotNet& model, const Image& img,
                            const StrExpConfig& cfg, const MethodParams& params,
                            const SegmentMap& seg, double baseline,
                            const std::vector<Sample>* calibration = nullptr);

}  // namespace seqattr
