#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "seqattr/attrib.hpp"
#include "seqattr/rng.hpp"

using namespace seqattr;

namespace {

Image random_image(std::uint64_t seed) {
  Rng rng(seed);
  Image img(kImageHeight, kImageWidth);
  for (double& v : img.data) v = rng.uniform();
  return img;
}

// Eight vertical bands of 16 columns each.
SegmentMap column_bands() {
  SegmentMap seg;
  seg.height = kImageHeight;
  seg.width = kImageWidth;
  seg.segment_count = 8;
  seg.labels.resize(static_cast<std::size_t>(seg.height) * seg.width);
  for (int r = 0; r < seg.height; ++r)
    for (int c = 0; c < seg.width; ++c)
      seg.labels[static_cast<std::size_t>(r) * seg.width + c] = c / 16;
  return seg;
}

// value = w . x + c, gradient = w under every rule.
class LinearScore final : public ScoreFunction {
 public:
  LinearScore(std::uint64_t seed, double offset)
      : offset_(offset), weights_(kImageHeight, kImageWidth) {
    Rng rng(seed);
    for (double& w : weights_.values) w = (rng.uniform() - 0.5) * 1e-3;
  }
  double value(const Image& img) const override {
    double s = offset_;
    for (std::size_t i = 0; i < img.data.size(); ++i)
      s += weights_.values[i] * img.data[i];
    return s;
  }
  bool differentiable() const override { return true; }
  AttributionMap gradient(const Image&, GradKind, const Image*) const override {
    return weights_;
  }
  const AttributionMap& weights() const { return weights_; }

 private:
  double offset_;
  AttributionMap weights_;
};

class ForwardOnly final : public ScoreFunction {
 public:
  double value(const Image& img) const override { return img.data[0]; }
};

// v(S) = offset + sum of per-segment worths over present segments.
class AdditiveValue final : public SegmentValueFn {
 public:
  AdditiveValue(std::vector<double> worth, double offset)
      : worth_(std::move(worth)), offset_(offset) {}
  int segment_count() const override { return static_cast<int>(worth_.size()); }
  double value(const std::vector<std::uint8_t>& present) const override {
    double v = offset_;
    for (std::size_t i = 0; i < present.size(); ++i)
      if (present[i]) v += worth_[i];
    return v;
  }

 private:
  std::vector<double> worth_;
  double offset_;
};

// v(S) depends only on |S|: every segment is interchangeable.
class SizeOnlyValue final : public SegmentValueFn {
 public:
  explicit SizeOnlyValue(int n) : n_(n) {}
  int segment_count() const override { return n_; }
  double value(const std::vector<std::uint8_t>& present) const override {
    int size = 0;
    for (std::uint8_t b : present) size += b;
    return std::sqrt(static_cast<double>(size) + 1.0);
  }

 private:
  int n_;
};

ExplainRequest make_request(const SlotNet& model, const Image& img,
                            const SegmentMap& seg, double baseline = 0.0) {
  ExplainRequest req;
  req.image = img;
  req.spec = GlobalScore{decode(forward_output(model, img)).slot_argmax};
  req.segments = seg;
  req.baseline = baseline;
  return req;
}

double max_abs(const AttributionMap& map) {
  double m = 0.0;
  for (double v : map.values) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

TEST_CASE("the method list is the canonical eleven") {
  const auto methods = list_methods();
  REQUIRE(methods.size() == 11);
  CHECK(methods.front() == MethodId::IntegratedGradients);
  CHECK(methods.back() == MethodId::ShapleySampling);
  CHECK(method_name(methods[0]) == "IntegratedGradients");
  CHECK(method_name(methods[1]) == "GradientSHAP");
  CHECK(method_name(methods[2]) == "DeepLift");
  CHECK(method_name(methods[3]) == "Saliency");
  CHECK(method_name(methods[4]) == "InputXGradient");
  CHECK(method_name(methods[5]) == "GuidedBackprop");
  CHECK(method_name(methods[6]) == "Deconvolution");
  CHECK(method_name(methods[7]) == "KernelSHAP");
  CHECK(method_name(methods[8]) == "FeatureAblation");
  CHECK(method_name(methods[9]) == "LIME");
  CHECK(method_name(methods[10]) == "ShapleySampling");
  for (std::size_t i = 0; i < methods.size(); ++i)
    for (std::size_t j = i + 1; j < methods.size(); ++j)
      CHECK(methods[i] != methods[j]);
  for (MethodId id : methods) CHECK(parse_method(method_name(id)) == id);
  CHECK(!parse_method("Occlusion").has_value());
}

TEST_CASE("every method returns a zero map for a constant model") {
  const SlotNet net = SlotNet::zeros();
  const SegmentMap seg = grid_segmentation(32, 128, 16);
  const ExplainRequest req = make_request(net, random_image(1), seg);
  MethodParams params;
  params.ig_steps = 4;
  params.gradshap_samples = 2;
  params.lime_samples = 40;
  params.kernelshap_samples = 40;
  params.shapley_permutations = 2;
  for (MethodId id : list_methods()) {
    const AttributionMap map = explain(id, net, req, params);
    CHECK(max_abs(map) <= 1e-9);
  }
}

TEST_CASE("sampling methods are seed-deterministic") {
  const SlotNet net = SlotNet::random_init(2);
  const SegmentMap seg = grid_segmentation(32, 128, 16);
  const ExplainRequest req = make_request(net, random_image(3), seg);
  MethodParams params;
  params.lime_samples = 60;
  params.kernelshap_samples = 60;
  params.shapley_permutations = 3;
  params.gradshap_samples = 4;
  params.seed = 42;
  for (MethodId id : {MethodId::GradientSHAP, MethodId::KernelSHAP, MethodId::LIME,
                      MethodId::ShapleySampling}) {
    const AttributionMap a = explain(id, net, req, params);
    const AttributionMap b = explain(id, net, req, params);
    CHECK(a == b);
    MethodParams other = params;
    other.seed = 43;
    CHECK(explain(id, net, req, other) != a);
  }
}

TEST_CASE("integrated gradients satisfies completeness") {
  const SlotNet net = SlotNet::random_init(5);
  const SegmentMap seg = grid_segmentation(32, 128, 16);
  MethodParams params;
  params.ig_steps = 256;
  for (std::uint64_t t = 0; t < 3; ++t) {
    const Image img = random_image(10 + t);
    const ExplainRequest req = make_request(net, img, seg);
    const AttributionMap map = explain(MethodId::IntegratedGradients, net, req, params);
    const RecognizerScore fn(net, req.spec);
    const double delta = fn.value(img) - fn.value(Image(32, 128, 0.0));
    double total = 0.0;
    for (double v : map.values) total += v;
    CHECK(std::abs(total - delta) <= 1e-3 * std::abs(delta) + 1e-6);
  }
}

TEST_CASE("linear fixture collapses IG, input-x-gradient and DeepLift") {
  const LinearScore fn(7, 0.4);
  const Image img = random_image(8);
  ExplainRequest req;
  req.image = img;
  req.spec = GlobalScore{};  // unused by the fixture
  req.baseline = 0.0;
  MethodParams params;
  params.ig_steps = 16;

  const AttributionMap ig = explain(MethodId::IntegratedGradients, fn, req, params);
  const AttributionMap ixg = explain(MethodId::InputXGradient, fn, req, params);
  const AttributionMap dl = explain(MethodId::DeepLift, fn, req, params);
  for (std::size_t i = 0; i < ig.values.size(); ++i) {
    const double want = img.data[i] * fn.weights().values[i];
    CHECK(std::abs(ig.values[i] - want) <= 1e-10);
    CHECK(std::abs(ixg.values[i] - want) <= 1e-10);
    CHECK(std::abs(dl.values[i] - want) <= 1e-10);
  }
}

TEST_CASE("guided and deconv pipelines match standard on an identity-activation net") {
  SlotNet net = SlotNet::random_init(9);
  net.activation = Activation::Identity;
  const SegmentMap seg = grid_segmentation(32, 128, 16);
  const ExplainRequest req = make_request(net, random_image(10), seg);
  MethodParams params;
  const AttributionMap guided = explain(MethodId::GuidedBackprop, net, req, params);
  const AttributionMap deconv = explain(MethodId::Deconvolution, net, req, params);
  const AttributionMap saliency = explain(MethodId::Saliency, net, req, params);
  CHECK(guided == deconv);
  for (std::size_t i = 0; i < guided.values.size(); ++i)
    CHECK(saliency.values[i] == std::abs(guided.values[i]));
}

TEST_CASE("saliency is non-negative") {
  const SlotNet net = SlotNet::random_init(11);
  const SegmentMap seg = grid_segmentation(32, 128, 16);
  const ExplainRequest req = make_request(net, random_image(12), seg);
  const AttributionMap map = explain(MethodId::Saliency, net, req, MethodParams{});
  for (double v : map.values) CHECK(v >= 0.0);
}

TEST_CASE("exact shapley satisfies the axioms") {
  SUBCASE("additivity and dummy") {
    const std::vector<double> worth = {0.3, -0.1, 0.0, 0.25, 0.05, -0.4, 0.125, 0.0};
    const AdditiveValue fn(worth, 0.2);
    const SegmentScores phi = exact_shapley(fn);
    REQUIRE(phi.scores.size() == worth.size());
    for (std::size_t i = 0; i < worth.size(); ++i)
      CHECK(std::abs(phi.scores[i] - worth[i]) <= 1e-9);
  }

  SUBCASE("efficiency on a real model") {
    const SlotNet net = SlotNet::random_init(13);
    const Image img = random_image(14);
    const SegmentMap seg = column_bands();
    const ExplainRequest req = make_request(net, img, seg);
    const SegmentScores phi = exact_shapley(net, req);
    SlotNetValueFn fn(net, img, seg, 0.0, req.spec);
    const double full = fn.value(std::vector<std::uint8_t>(8, 1));
    const double empty = fn.value(std::vector<std::uint8_t>(8, 0));
    double sum = 0.0;
    for (double p : phi.scores) sum += p;
    CHECK(std::abs(sum - (full - empty)) <= 1e-9);
  }

  SUBCASE("symmetry") {
    const SizeOnlyValue fn(6);
    const SegmentScores phi = exact_shapley(fn);
    for (std::size_t i = 1; i < phi.scores.size(); ++i)
      CHECK(std::abs(phi.scores[i] - phi.scores[0]) <= 1e-9);
  }

  SUBCASE("segment limit") {
    const SizeOnlyValue fn(17);
    CHECK_THROWS_AS(exact_shapley(fn), std::invalid_argument);
  }
}

TEST_CASE("feature ablation equals exact shapley on an additive value") {
  const std::vector<double> worth = {0.2, -0.3, 0.15, 0.0, 0.4, -0.05, 0.1, 0.33};
  const AdditiveValue fn(worth, 0.1);
  const SegmentScores phi = exact_shapley(fn);

  std::vector<std::uint8_t> full(8, 1);
  for (int i = 0; i < 8; ++i) {
    std::vector<std::uint8_t> without = full;
    without[static_cast<std::size_t>(i)] = 0;
    const double ablation = fn.value(full) - fn.value(without);
    CHECK(std::abs(ablation - phi.scores[static_cast<std::size_t>(i)]) <= 1e-9);
  }
}

TEST_CASE("sampled shapley converges to the exact values") {
  const SlotNet net = SlotNet::random_init(15);
  const Image img = random_image(16);
  const SegmentMap seg = column_bands();
  const ExplainRequest req = make_request(net, img, seg);

  const SegmentScores exact = exact_shapley(net, req);
  MethodParams params;
  params.shapley_permutations = 2000;
  params.seed = 3;
  const AttributionMap sampled = explain(MethodId::ShapleySampling, net, req, params);
  const SegmentScores approx = segment_means(sampled, seg);

  const auto [lo, hi] = std::minmax_element(exact.scores.begin(), exact.scores.end());
  const double range = *hi - *lo;
  for (std::size_t i = 0; i < exact.scores.size(); ++i)
    CHECK(std::abs(approx.scores[i] - exact.scores[i]) <= 0.02 * range);
}

TEST_CASE("kernel shap with full enumeration reproduces exact shapley") {
  const SlotNet net = SlotNet::random_init(17);
  const Image img = random_image(18);
  const SegmentMap seg = column_bands();
  const ExplainRequest req = make_request(net, img, seg);

  const SegmentScores exact = exact_shapley(net, req);
  MethodParams params;
  params.kernelshap_enumerate = true;
  const AttributionMap map = explain(MethodId::KernelSHAP, net, req, params);
  const SegmentScores approx = segment_means(map, seg);
  for (std::size_t i = 0; i < exact.scores.size(); ++i)
    CHECK(std::abs(approx.scores[i] - exact.scores[i]) <= 1e-6);
}

TEST_CASE("perturbation maps are constant within segments") {
  const SlotNet net = SlotNet::random_init(19);
  const SegmentMap seg = grid_segmentation(32, 128, 32);
  const ExplainRequest req = make_request(net, random_image(20), seg);
  const AttributionMap map = explain(MethodId::FeatureAblation, net, req, MethodParams{});
  CHECK(map.at(0, 0) == map.at(31, 31));
  CHECK(map.at(0, 32) == map.at(31, 63));
  CHECK(map.at(0, 0) != map.at(0, 32));  // different segments generally differ
}

TEST_CASE("capability errors") {
  const SlotNet net = SlotNet::random_init(21);
  const SegmentMap seg = grid_segmentation(32, 128, 16);

  ExplainRequest no_seg = make_request(net, random_image(22), seg);
  no_seg.segments.reset();
  CHECK_THROWS_AS(explain(MethodId::LIME, net, no_seg, MethodParams{}), CapabilityError);
  CHECK_THROWS_AS(explain(MethodId::FeatureAblation, net, no_seg, MethodParams{}),
                  CapabilityError);

  const ForwardOnly fn;
  const ExplainRequest req = make_request(net, random_image(23), seg);
  CHECK_THROWS_AS(explain(MethodId::Saliency, fn, req, MethodParams{}), CapabilityError);
  CHECK_THROWS_AS(explain(MethodId::IntegratedGradients, fn, req, MethodParams{}),
                  CapabilityError);
  // perturbation methods only need forward evaluations
  MethodParams cheap;
  cheap.lime_samples = 20;
  CHECK_NOTHROW(explain(MethodId::LIME, fn, req, cheap));
}

TEST_CASE("masked evaluator agrees with mask-then-forward") {
  const SlotNet net = SlotNet::random_init(25);
  const Image img = random_image(26);
  const SegmentMap seg = grid_segmentation(32, 128, 16);
  const ScoreSpec spec = GlobalScore{decode(forward_output(net, img)).slot_argmax};
  SlotNetValueFn fast(net, img, seg, 0.3, spec);
  const RecognizerScore slow_fn(net, spec);
  MaskingValueFn slow(slow_fn, img, seg, 0.3);

  Rng rng(27);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::uint8_t> present(static_cast<std::size_t>(seg.segment_count));
    for (auto& b : present) b = static_cast<std::uint8_t>(rng.uniform_below(2));
    CHECK(fast.value(present) == doctest::Approx(slow.value(present)).epsilon(1e-10));
  }
}
