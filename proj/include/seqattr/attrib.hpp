#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "seqattr/image.hpp"
#include "seqattr/recognizer.hpp"

namespace seqattr {

// The compared attribution methods, in the canonical comparison order.
enum class MethodId {
  IntegratedGradients,
  GradientSHAP,
  DeepLift,
  Saliency,
  InputXGradient,
  GuidedBackprop,
  Deconvolution,
  KernelSHAP,
  FeatureAblation,
  LIME,
  ShapleySampling,
};

std::vector<MethodId> list_methods();
std::string_view method_name(MethodId id);
std::optional<MethodId> parse_method(std::string_view name);
bool is_gradient_method(MethodId id);

struct MethodParams {
  int ig_steps = 32;                  // midpoint-rule path steps, >= 2
  int gradshap_samples = 16;          // noisy-baseline gradient samples
  double gradshap_sigma = 0.09;       // stddev of the baseline noise
  int lime_samples = 400;             // Bernoulli masks
  double lime_ridge = 1e-3;
  double lime_kernel_width = 0.25;    // in masked-fraction units
  int kernelshap_samples = 400;       // sampled coalitions
  bool kernelshap_enumerate = false;  // evaluate every coalition instead
  double kernelshap_ridge = 1e-6;     // fallback when the system is singular
  int shapley_permutations = 25;
  std::uint64_t seed = 0;
};

// Thrown when a method needs a capability the model does not provide
// (gradients on a forward-only model, a segment map that was not supplied).
struct CapabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class GradKind { Standard, Guided, Deconv, DeepLiftRescale };

// A scalar function of the image, the thing a method explains. The
// recognizer adapter below is the production implementation; tests plug in
// analytic fixtures (linear scores, additive per-segment scores).
class ScoreFunction {
 public:
  virtual ~ScoreFunction() = default;
  virtual double value(const Image& img) const = 0;
  virtual bool differentiable() const { return false; }
  // `baseline` is consulted only by DeepLiftRescale.
  virtual AttributionMap gradient(const Image& img, GradKind kind,
                                  const Image* baseline) const;
};

// score(model, img, spec) as a ScoreFunction.
class RecognizerScore final : public ScoreFunction {
 public:
  RecognizerScore(const SlotNet& model, ScoreSpec spec)
      : model_(&model), spec_(std::move(spec)) {}
  double value(const Image& img) const override;
  bool differentiable() const override { return true; }
  AttributionMap gradient(const Image& img, GradKind kind,
                          const Image* baseline) const override;

 private:
  const SlotNet* model_;
  ScoreSpec spec_;
};

// Coalition value function for the perturbation methods: the score of the
// image with every absent segment masked to the baseline.
class SegmentValueFn {
 public:
  virtual ~SegmentValueFn() = default;
  virtual int segment_count() const = 0;
  // present.size() == segment_count(); nonzero entries are kept.
  virtual double value(const std::vector<std::uint8_t>& present) const = 0;
};

// Generic implementation: mask_segments + ScoreFunction::value.
class MaskingValueFn final : public SegmentValueFn {
 public:
  MaskingValueFn(const ScoreFunction& fn, const Image& img,
                 const SegmentMap& seg, double baseline);
  int segment_count() const override { return seg_->segment_count; }
  double value(const std::vector<std::uint8_t>& present) const override;

 private:
  const ScoreFunction* fn_;
  const Image* img_;
  const SegmentMap* seg_;
  double baseline_;
};

// Recognizer fast path via MaskedEvaluator.
class SlotNetValueFn final : public SegmentValueFn {
 public:
  SlotNetValueFn(const SlotNet& model, const Image& img, const SegmentMap& seg,
                 double baseline, ScoreSpec spec)
      : eval_(model, img, seg, baseline), spec_(std::move(spec)) {}
  int segment_count() const override { return eval_.segment_count(); }
  double value(const std::vector<std::uint8_t>& present) const override {
    return eval_.score(present, spec_);
  }

 private:
  MaskedEvaluator eval_;
  ScoreSpec spec_;
};

struct ExplainRequest {
  Image image;
  ScoreSpec spec;
  std::optional<SegmentMap> segments;  // required by perturbation methods
  double baseline = 0.0;
};

// Dispatches to the per-method implementation. Gradient-family methods
// require fn.differentiable(); perturbation methods require `segments`.
// Sampling methods are pure functions of params.seed.
AttributionMap explain(MethodId id, const ScoreFunction& fn,
                       const ExplainRequest& req, const MethodParams& params);

// Recognizer entry point: builds the score function from req.spec and routes
// perturbation methods through the fast masked evaluator.
AttributionMap explain(MethodId id, const SlotNet& model,
                       const ExplainRequest& req, const MethodParams& params);

// Exact Shapley values of `fn` by full coalition enumeration (n <= 16).
SegmentScores exact_shapley(const SegmentValueFn& fn);
SegmentScores exact_shapley(const SlotNet& model, const ExplainRequest& req);

}  // namespace seqattr
