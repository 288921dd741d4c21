#include "seqattr/attrib.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "seqattr/kernels.hpp"
#include "seqattr/rng.hpp"

namespace seqattr {
namespace {

struct MethodInfo {
  MethodId id;
  std::string_view name;
  bool gradient_family;
};

constexpr MethodInfo kMethods[] = {
    {MethodId::IntegratedGradients, "IntegratedGradients", true},
    {MethodId::GradientSHAP, "GradientSHAP", true},
    {MethodId::DeepLift, "DeepLift", true},
    {MethodId::Saliency, "Saliency", true},
    {MethodId::InputXGradient, "InputXGradient", true},
    {MethodId::GuidedBackprop, "GuidedBackprop", true},
    {MethodId::Deconvolution, "Deconvolution", true},
    {MethodId::KernelSHAP, "KernelSHAP", false},
    {MethodId::FeatureAblation, "FeatureAblation", false},
    {MethodId::LIME, "LIME", false},
    {MethodId::ShapleySampling, "ShapleySampling", false},
};

const MethodInfo& info(MethodId id) {
  for (const auto& m : kMethods)
    if (m.id == id) return m;
  throw std::invalid_argument("unknown method id");
}

}  // namespace

std::vector<MethodId> list_methods() {
  std::vector<MethodId> out;
  for (const auto& m : kMethods) out.push_back(m.id);
  return out;
}

std::string_view method_name(MethodId id) { return info(id).name; }

std::optional<MethodId> parse_method(std::string_view name) {
  for (const auto& m : kMethods)
    if (m.name == name) return m.id;
  return std::nullopt;
}

bool is_gradient_method(MethodId id) { return info(id).gradient_family; }

AttributionMap ScoreFunction::gradient(const Image&, GradKind, const Image*) const {
  throw CapabilityError("score function does not provide gradients");
}

double RecognizerScore::value(const Image& img) const {
  return score(*model_, img, spec_);
}

AttributionMap RecognizerScore::gradient(const Image& img, GradKind kind,
                                         const Image* baseline) const {
  BackwardRule rule = BackwardRule::standard();
  switch (kind) {
    case GradKind::Standard:
      break;
    case GradKind::Guided:
      rule = BackwardRule::guided();
      break;
    case GradKind::Deconv:
      rule = BackwardRule::deconv();
      break;
    case GradKind::DeepLiftRescale: {
      if (!baseline)
        throw std::invalid_argument("DeepLiftRescale gradient needs a baseline image");
      rule = BackwardRule::deeplift_rescale(forward(*model_, *baseline).second);
      break;
    }
  }
  return score_gradient(*model_, img, spec_, rule);
}

MaskingValueFn::MaskingValueFn(const ScoreFunction& fn, const Image& img,
                               const SegmentMap& seg, double baseline)
    : fn_(&fn), img_(&img), seg_(&seg), baseline_(baseline) {
  if (img.height != seg.height || img.width != seg.width)
    throw std::invalid_argument("image/segment dims differ");
}

double MaskingValueFn::value(const std::vector<std::uint8_t>& present) const {
  if (present.size() != static_cast<std::size_t>(seg_->segment_count))
    throw std::invalid_argument("coalition size != segment count");
  std::vector<int> removed;
  for (int s = 0; s < seg_->segment_count; ++s)
    if (!present[static_cast<std::size_t>(s)]) removed.push_back(s);
  return fn_->value(mask_segments(*img_, *seg_, removed, baseline_));
}

namespace {

Image baseline_image(const Image& like, double baseline) {
  return Image(like.height, like.width, baseline);
}

// Gaussian elimination with partial pivoting; false when numerically singular.
bool solve_linear(std::vector<double> a, std::vector<double> b, int n,
                  std::vector<double>& out) {
  double scale = 0.0;
  for (double v : a) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return false;
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[static_cast<std::size_t>(r) * n + col]) >
          std::abs(a[static_cast<std::size_t>(pivot) * n + col]))
        pivot = r;
    if (std::abs(a[static_cast<std::size_t>(pivot) * n + col]) < scale * 1e-13)
      return false;
    if (pivot != col) {
      for (int c = 0; c < n; ++c)
        std::swap(a[static_cast<std::size_t>(pivot) * n + c],
                  a[static_cast<std::size_t>(col) * n + c]);
      std::swap(b[static_cast<std::size_t>(pivot)], b[static_cast<std::size_t>(col)]);
    }
    const double d = a[static_cast<std::size_t>(col) * n + col];
    for (int r = col + 1; r < n; ++r) {
      const double f = a[static_cast<std::size_t>(r) * n + col] / d;
      if (f == 0.0) continue;
      for (int c = col; c < n; ++c)
        a[static_cast<std::size_t>(r) * n + c] -= f * a[static_cast<std::size_t>(col) * n + c];
      b[static_cast<std::size_t>(r)] -= f * b[static_cast<std::size_t>(col)];
    }
  }
  out.assign(static_cast<std::size_t>(n), 0.0);
  for (int r = n - 1; r >= 0; --r) {
    double s = b[static_cast<std::size_t>(r)];
    for (int c = r + 1; c < n; ++c)
      s -= a[static_cast<std::size_t>(r) * n + c] * out[static_cast<std::size_t>(c)];
    out[static_cast<std::size_t>(r)] = s / a[static_cast<std::size_t>(r) * n + r];
  }
  return true;
}

AttributionMap elementwise_gradient_product(const Image& x, const Image& ref,
                                            const AttributionMap& grad) {
  AttributionMap map(x.height, x.width);
  for (std::size_t i = 0; i < map.values.size(); ++i)
    map.values[i] = (x.data[i] - ref.data[i]) * grad.values[i];
  return map;
}

AttributionMap integrated_gradients(const ScoreFunction& fn, const Image& x,
                                    double baseline, int steps) {
  if (steps < 2) throw std::invalid_argument("IntegratedGradients needs >= 2 steps");
  const Image x0 = baseline_image(x, baseline);
  AttributionMap accum(x.height, x.width);
  Image xt = x0;
  for (int t = 1; t <= steps; ++t) {
    const double alpha = (t - 0.5) / steps;
    for (std::size_t i = 0; i < xt.data.size(); ++i)
      xt.data[i] = x0.data[i] + alpha * (x.data[i] - x0.data[i]);
    const AttributionMap g = fn.gradient(xt, GradKind::Standard, nullptr);
    for (std::size_t i = 0; i < accum.values.size(); ++i)
      accum.values[i] += g.values[i];
  }
  AttributionMap map(x.height, x.width);
  for (std::size_t i = 0; i < map.values.size(); ++i)
    map.values[i] = (x.data[i] - x0.data[i]) * accum.values[i] / steps;
  return map;
}

AttributionMap gradient_shap(const ScoreFunction& fn, const Image& x,
                             double baseline, const MethodParams& params) {
  if (params.gradshap_samples < 1)
    throw std::invalid_argument("GradientSHAP needs >= 1 sample");
  AttributionMap accum(x.height, x.width);
  Image noisy_base(x.height, x.width);
  Image xt(x.height, x.width);
  for (int s = 0; s < params.gradshap_samples; ++s) {
    Rng rng(derive_seed(params.seed, static_cast<std::uint64_t>(s)));
    for (std::size_t i = 0; i < noisy_base.data.size(); ++i)
      noisy_base.data[i] =
          std::clamp(baseline + rng.normal(0.0, params.gradshap_sigma), 0.0, 1.0);
    const double alpha = rng.uniform();
    for (std::size_t i = 0; i < xt.data.size(); ++i)
      xt.data[i] = noisy_base.data[i] + alpha * (x.data[i] - noisy_base.data[i]);
    const AttributionMap g = fn.gradient(xt, GradKind::Standard, nullptr);
    for (std::size_t i = 0; i < accum.values.size(); ++i)
      accum.values[i] += (x.data[i] - noisy_base.data[i]) * g.values[i];
  }
  for (double& v : accum.values) v /= params.gradshap_samples;
  return accum;
}

SegmentScores feature_ablation(const SegmentValueFn& fn) {
  const int n = fn.segment_count();
  std::vector<std::uint8_t> full(static_cast<std::size_t>(n), 1);
  const double r_full = fn.value(full);
  SegmentScores out;
  out.scores.assign(static_cast<std::size_t>(n), 0.0);
#pragma omp parallel for schedule(dynamic) num_threads(kernels::thread_count())
  for (int i = 0; i < n; ++i) {
    std::vector<std::uint8_t> present = full;
    present[static_cast<std::size_t>(i)] = 0;
    out.scores[static_cast<std::size_t>(i)] = r_full - fn.value(present);
  }
  return out;
}

SegmentScores shapley_sampling(const SegmentValueFn& fn, int permutations,
                               std::uint64_t seed) {
  if (permutations < 1)
    throw std::invalid_argument("ShapleySampling needs >= 1 permutation");
  const int n = fn.segment_count();
  const double v_empty = fn.value(std::vector<std::uint8_t>(static_cast<std::size_t>(n), 0));

  std::vector<std::vector<double>> contrib(
      static_cast<std::size_t>(permutations),
      std::vector<double>(static_cast<std::size_t>(n), 0.0));
#pragma omp parallel for schedule(dynamic) num_threads(kernels::thread_count())
  for (int p = 0; p < permutations; ++p) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(p)));
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<std::uint8_t> present(static_cast<std::size_t>(n), 0);
    double prev = v_empty;
    for (int idx : perm) {
      present[static_cast<std::size_t>(idx)] = 1;
      const double cur = fn.value(present);
      contrib[static_cast<std::size_t>(p)][static_cast<std::size_t>(idx)] = cur - prev;
      prev = cur;
    }
  }

  SegmentScores out;
  out.scores.assign(static_cast<std::size_t>(n), 0.0);
  for (int p = 0; p < permutations; ++p)
    for (int i = 0; i < n; ++i)
      out.scores[static_cast<std::size_t>(i)] +=
          contrib[static_cast<std::size_t>(p)][static_cast<std::size_t>(i)];
  for (double& s : out.scores) s /= permutations;
  return out;
}

double shapley_kernel_weight(int n, int size) {
  // (n-1) / (C(n,size) * size * (n-size))
  double comb = 1.0;
  for (int i = 1; i <= size; ++i)
    comb *= static_cast<double>(n - i + 1) / static_cast<double>(i);
  return (n - 1.0) / (comb * size * (n - size));
}

SegmentScores kernel_shap(const SegmentValueFn& fn, const MethodParams& params) {
  const int n = fn.segment_count();
  const double v0 = fn.value(std::vector<std::uint8_t>(static_cast<std::size_t>(n), 0));
  const double v1 = fn.value(std::vector<std::uint8_t>(static_cast<std::size_t>(n), 1));
  const double delta = v1 - v0;

  SegmentScores out;
  out.scores.assign(static_cast<std::size_t>(n), 0.0);
  if (n == 1) {
    out.scores[0] = delta;
    return out;
  }

  std::vector<std::vector<std::uint8_t>> coalitions;
  if (params.kernelshap_enumerate) {
    if (n > 16)
      throw std::invalid_argument("KernelSHAP enumeration limited to 16 segments");
    for (std::uint32_t mask = 1; mask + 1 < (1u << n); ++mask) {
      std::vector<std::uint8_t> z(static_cast<std::size_t>(n), 0);
      for (int i = 0; i < n; ++i) z[static_cast<std::size_t>(i)] = (mask >> i) & 1u;
      coalitions.push_back(std::move(z));
    }
  } else {
    if (params.kernelshap_samples < 1)
      throw std::invalid_argument("KernelSHAP needs >= 1 sample");
    // Size distribution proportional to the kernel weight summed over all
    // coalitions of that size: p(s) ~ (n-1)/(s(n-s)).
    std::vector<double> cdf(static_cast<std::size_t>(n - 1), 0.0);
    double total = 0.0;
    for (int s = 1; s < n; ++s) {
      total += (n - 1.0) / (static_cast<double>(s) * (n - s));
      cdf[static_cast<std::size_t>(s - 1)] = total;
    }
    for (int i = 0; i < params.kernelshap_samples; ++i) {
      Rng rng(derive_seed(params.seed, static_cast<std::uint64_t>(i)));
      const double u = rng.uniform() * total;
      int size = n - 1;
      for (int s = 1; s < n; ++s)
        if (u < cdf[static_cast<std::size_t>(s - 1)]) {
          size = s;
          break;
        }
      std::vector<int> idx(static_cast<std::size_t>(n));
      std::iota(idx.begin(), idx.end(), 0);
      rng.shuffle(idx);
      std::vector<std::uint8_t> z(static_cast<std::size_t>(n), 0);
      for (int k = 0; k < size; ++k) z[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])] = 1;
      coalitions.push_back(std::move(z));
    }
  }

  std::vector<double> values(coalitions.size());
#pragma omp parallel for schedule(dynamic) num_threads(kernels::thread_count())
  for (long i = 0; i < static_cast<long>(coalitions.size()); ++i)
    values[static_cast<std::size_t>(i)] = fn.value(coalitions[static_cast<std::size_t>(i)]);

  // Weighted least squares on the first n-1 coefficients; the last one is
  // eliminated through the efficiency constraint sum(phi) = v(full) - v(empty).
  const int q = n - 1;
  std::vector<double> a(static_cast<std::size_t>(q) * q, 0.0);
  std::vector<double> rhs(static_cast<std::size_t>(q), 0.0);
  std::vector<double> row(static_cast<std::size_t>(q));
  for (std::size_t c = 0; c < coalitions.size(); ++c) {
    const auto& z = coalitions[c];
    int size = 0;
    for (std::uint8_t b : z) size += b;
    const double w = shapley_kernel_weight(n, size);
    const double zlast = z[static_cast<std::size_t>(n - 1)] ? 1.0 : 0.0;
    for (int i = 0; i < q; ++i)
      row[static_cast<std::size_t>(i)] = (z[static_cast<std::size_t>(i)] ? 1.0 : 0.0) - zlast;
    const double y = values[c] - v0 - zlast * delta;
    for (int i = 0; i < q; ++i) {
      if (row[static_cast<std::size_t>(i)] == 0.0) continue;
      rhs[static_cast<std::size_t>(i)] += w * y * row[static_cast<std::size_t>(i)];
      for (int j = 0; j < q; ++j)
        a[static_cast<std::size_t>(i) * q + j] +=
            w * row[static_cast<std::size_t>(i)] * row[static_cast<std::size_t>(j)];
    }
  }

  std::vector<double> phi;
  if (!solve_linear(a, rhs, q, phi)) {
    for (int i = 0; i < q; ++i)
      a[static_cast<std::size_t>(i) * q + i] += params.kernelshap_ridge;
    if (!solve_linear(a, rhs, q, phi))
      throw std::runtime_error("KernelSHAP normal system unsolvable");
  }
  double sum = 0.0;
  for (int i = 0; i < q; ++i) {
    out.scores[static_cast<std::size_t>(i)] = phi[static_cast<std::size_t>(i)];
    sum += phi[static_cast<std::size_t>(i)];
  }
  out.scores[static_cast<std::size_t>(n - 1)] = delta - sum;
  return out;
}

SegmentScores lime(const SegmentValueFn& fn, const MethodParams& params) {
  if (params.lime_samples < 1) throw std::invalid_argument("LIME needs >= 1 sample");
  const int n = fn.segment_count();

  std::vector<std::vector<std::uint8_t>> masks(
      static_cast<std::size_t>(params.lime_samples));
  for (int i = 0; i < params.lime_samples; ++i) {
    Rng rng(derive_seed(params.seed, static_cast<std::uint64_t>(i)));
    auto& z = masks[static_cast<std::size_t>(i)];
    z.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
      z[static_cast<std::size_t>(j)] = static_cast<std::uint8_t>(rng.uniform_below(2));
  }

  std::vector<double> values(masks.size());
#pragma omp parallel for schedule(dynamic) num_threads(kernels::thread_count())
  for (long i = 0; i < static_cast<long>(masks.size()); ++i)
    values[static_cast<std::size_t>(i)] = fn.value(masks[static_cast<std::size_t>(i)]);

  // Weighted ridge regression with an unpenalized intercept; similarity decays
  // with the fraction of masked segments.
  const int dim = n + 1;
  std::vector<double> a(static_cast<std::size_t>(dim) * dim, 0.0);
  std::vector<double> rhs(static_cast<std::size_t>(dim), 0.0);
  std::vector<double> feat(static_cast<std::size_t>(dim));
  for (std::size_t m = 0; m < masks.size(); ++m) {
    const auto& z = masks[m];
    int masked = 0;
    for (std::uint8_t b : z) masked += 1 - b;
    const double d = static_cast<double>(masked) / n;
    const double w = std::exp(-(d * d) / (params.lime_kernel_width * params.lime_kernel_width));
    feat[0] = 1.0;
    for (int j = 0; j < n; ++j)
      feat[static_cast<std::size_t>(j + 1)] = z[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
    for (int i = 0; i < dim; ++i) {
      if (feat[static_cast<std::size_t>(i)] == 0.0) continue;
      rhs[static_cast<std::size_t>(i)] += w * values[m] * feat[static_cast<std::size_t>(i)];
      for (int j = 0; j < dim; ++j)
        a[static_cast<std::size_t>(i) * dim + j] +=
            w * feat[static_cast<std::size_t>(i)] * feat[static_cast<std::size_t>(j)];
    }
  }
  for (int j = 1; j < dim; ++j)
    a[static_cast<std::size_t>(j) * dim + j] += params.lime_ridge;

  std::vector<double> beta;
  if (!solve_linear(a, rhs, dim, beta))
    throw std::runtime_error("LIME regression system unsolvable");
  SegmentScores out;
  out.scores.assign(static_cast<std::size_t>(n), 0.0);
  for (int j = 0; j < n; ++j)
    out.scores[static_cast<std::size_t>(j)] = beta[static_cast<std::size_t>(j + 1)];
  return out;
}

void check_finite(const AttributionMap& map) {
  for (double v : map.values)
    if (!std::isfinite(v))
      throw std::runtime_error("attribution produced non-finite values");
}

AttributionMap explain_core(MethodId id, const ScoreFunction* fn,
                            const SegmentValueFn* seg_fn, const ExplainRequest& req,
                            const MethodParams& params) {
  const Image& x = req.image;
  AttributionMap map;

  if (is_gradient_method(id)) {
    if (!fn->differentiable())
      throw CapabilityError(std::string(method_name(id)) +
                            " requires a model with gradient support");
    switch (id) {
      case MethodId::Saliency: {
        map = fn->gradient(x, GradKind::Standard, nullptr);
        for (double& v : map.values) v = std::abs(v);
        break;
      }
      case MethodId::InputXGradient: {
        map = fn->gradient(x, GradKind::Standard, nullptr);
        for (std::size_t i = 0; i < map.values.size(); ++i) map.values[i] *= x.data[i];
        break;
      }
      case MethodId::IntegratedGradients:
        map = integrated_gradients(*fn, x, req.baseline, params.ig_steps);
        break;
      case MethodId::GradientSHAP:
        map = gradient_shap(*fn, x, req.baseline, params);
        break;
      case MethodId::GuidedBackprop:
        map = fn->gradient(x, GradKind::Guided, nullptr);
        break;
      case MethodId::Deconvolution:
        map = fn->gradient(x, GradKind::Deconv, nullptr);
        break;
      case MethodId::DeepLift: {
        const Image x0 = baseline_image(x, req.baseline);
        map = elementwise_gradient_product(
            x, x0, fn->gradient(x, GradKind::DeepLiftRescale, &x0));
        break;
      }
      default:
        throw std::invalid_argument("unhandled gradient method");
    }
  } else {
    if (!seg_fn)
      throw CapabilityError(std::string(method_name(id)) +
                            " requires a segment map in the request");
    SegmentScores scores;
    switch (id) {
      case MethodId::FeatureAblation:
        scores = feature_ablation(*seg_fn);
        break;
      case MethodId::ShapleySampling:
        scores = shapley_sampling(*seg_fn, params.shapley_permutations, params.seed);
        break;
      case MethodId::KernelSHAP:
        scores = kernel_shap(*seg_fn, params);
        break;
      case MethodId::LIME:
        scores = lime(*seg_fn, params);
        break;
      default:
        throw std::invalid_argument("unhandled perturbation method");
    }
    map = scores_to_map(scores, *req.segments);
  }

  check_finite(map);
  return map;
}

}  // namespace

AttributionMap explain(MethodId id, const ScoreFunction& fn,
                       const ExplainRequest& req, const MethodParams& params) {
  if (!is_gradient_method(id)) {
    if (!req.segments)
      throw CapabilityError(std::string(method_name(id)) +
                            " requires a segment map in the request");
    MaskingValueFn seg_fn(fn, req.image, *req.segments, req.baseline);
    return explain_core(id, &fn, &seg_fn, req, params);
  }
  return explain_core(id, &fn, nullptr, req, params);
}

AttributionMap explain(MethodId id, const SlotNet& model,
                       const ExplainRequest& req, const MethodParams& params) {
  if (!is_gradient_method(id)) {
    if (!req.segments)
      throw CapabilityError(std::string(method_name(id)) +
                            " requires a segment map in the request");
    SlotNetValueFn seg_fn(model, req.image, *req.segments, req.baseline, req.spec);
    return explain_core(id, nullptr, &seg_fn, req, params);
  }
  RecognizerScore fn(model, req.spec);
  return explain_core(id, &fn, nullptr, req, params);
}

SegmentScores exact_shapley(const SegmentValueFn& fn) {
  const int n = fn.segment_count();
  if (n < 1 || n > 16)
    throw std::invalid_argument("exact_shapley supports 1..16 segments");

  const std::uint32_t total = 1u << n;
  std::vector<double> values(total);
#pragma omp parallel for schedule(dynamic, 64) num_threads(kernels::thread_count())
  for (long mask = 0; mask < static_cast<long>(total); ++mask) {
    std::vector<std::uint8_t> present(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i)
      present[static_cast<std::size_t>(i)] = (static_cast<std::uint32_t>(mask) >> i) & 1u;
    values[static_cast<std::size_t>(mask)] = fn.value(present);
  }

  // weight(s) = s! (n-1-s)! / n!  for a coalition of size s joined by i.
  std::vector<double> weight(static_cast<std::size_t>(n), 0.0);
  std::vector<double> fact(static_cast<std::size_t>(n + 1), 1.0);
  for (int i = 1; i <= n; ++i)
    fact[static_cast<std::size_t>(i)] = fact[static_cast<std::size_t>(i - 1)] * i;
  for (int s = 0; s < n; ++s)
    weight[static_cast<std::size_t>(s)] = fact[static_cast<std::size_t>(s)] *
                                          fact[static_cast<std::size_t>(n - 1 - s)] /
                                          fact[static_cast<std::size_t>(n)];

  SegmentScores out;
  out.scores.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    const std::uint32_t bit = 1u << i;
    double phi = 0.0;
    for (std::uint32_t mask = 0; mask < total; ++mask) {
      if (mask & bit) continue;
      phi += weight[static_cast<std::size_t>(std::popcount(mask))] *
             (values[static_cast<std::size_t>(mask | bit)] -
              values[static_cast<std::size_t>(mask)]);
    }
    out.scores[static_cast<std::size_t>(i)] = phi;
  }
  return out;
}

SegmentScores exact_shapley(const SlotNet& model, const ExplainRequest& req) {
  if (!req.segments)
    throw std::invalid_argument("exact_shapley requires a segment map");
  SlotNetValueFn fn(model, req.image, *req.segments, req.baseline, req.spec);
  return exact_shapley(fn);
}

}  // namespace seqattr
