#include "seqattr/recognizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "seqattr/kernels.hpp"
#include "seqattr/rng.hpp"

namespace seqattr {
namespace {

constexpr int kHeadRows = kSlots * kClasses;  // 296
constexpr double kDeepLiftEps = 1e-9;

double activate(Activation act, double pre) {
  return act == Activation::Relu ? std::max(pre, 0.0) : pre;
}

double activate_deriv(Activation act, double pre) {
  return act == Activation::Relu ? (pre > 0.0 ? 1.0 : 0.0) : 1.0;
}

// Row-wise softmax with the usual max-shift for stability.
void softmax_row(const double* logits, double* probs) {
  double peak = logits[0];
  for (int c = 1; c < kClasses; ++c) peak = std::max(peak, logits[c]);
  double sum = 0.0;
  for (int c = 0; c < kClasses; ++c) {
    probs[c] = std::exp(logits[c] - peak);
    sum += probs[c];
  }
  for (int c = 0; c < kClasses; ++c) probs[c] /= sum;
}

void check_input(const Image& img) {
  if (img.height != kImageHeight || img.width != kImageWidth)
    throw std::invalid_argument("recognizer expects a 32x128 image");
  for (double v : img.data)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite input pixel");
}

void check_spec(const ScoreSpec& spec) {
  if (const auto* g = std::get_if<GlobalScore>(&spec)) {
    for (int cls : g->target_labels)
      if (cls < 0 || cls >= kClasses)
        throw std::invalid_argument("target label class out of range");
  } else {
    const auto& l = std::get<LocalScore>(spec);
    if (l.slot < 0 || l.slot >= kSlots)
      throw std::invalid_argument("slot index out of range");
    if (l.target_class < 0 || l.target_class >= kClasses)
      throw std::invalid_argument("target class out of range");
  }
}

}  // namespace

int char_to_class(char c) {
  auto pos = kCharset.find(c);
  if (pos == std::string_view::npos)
    throw std::invalid_argument(std::string("character outside charset: '") + c + "'");
  return static_cast<int>(pos) + 1;
}

char class_to_char(int cls) {
  if (cls < 1 || cls >= kClasses)
    throw std::invalid_argument("class index has no character");
  return kCharset[static_cast<std::size_t>(cls - 1)];
}

SlotNet SlotNet::zeros() {
  SlotNet net;
  net.w1.assign(static_cast<std::size_t>(kHiddenDim) * kInputDim, 0.0);
  net.b1.assign(kHiddenDim, 0.0);
  net.head_w.assign(static_cast<std::size_t>(kHeadRows) * kHiddenDim, 0.0);
  net.head_b.assign(kHeadRows, 0.0);
  return net;
}

SlotNet SlotNet::random_init(std::uint64_t seed) {
  SlotNet net = zeros();
  Rng rng(seed);
  const double w1_sigma = std::sqrt(2.0 / kInputDim);
  for (double& w : net.w1) w = rng.normal(0.0, w1_sigma);
  const double head_sigma = std::sqrt(1.0 / kHiddenDim);
  for (double& w : net.head_w) w = rng.normal(0.0, head_sigma);
  return net;
}

std::pair<ModelOutput, ForwardTrace> forward(const SlotNet& model, const Image& img) {
  check_input(img);
  ForwardTrace trace;
  trace.pre.resize(kHiddenDim);
  kernels::matvec(model.w1.data(), kHiddenDim, kInputDim, img.data.data(),
                  trace.pre.data());
  for (int h = 0; h < kHiddenDim; ++h) trace.pre[h] += model.b1[h];
  trace.post.resize(kHiddenDim);
  for (int h = 0; h < kHiddenDim; ++h)
    trace.post[h] = activate(model.activation, trace.pre[h]);

  trace.logits.resize(kHeadRows);
  for (int row = 0; row < kHeadRows; ++row)
    trace.logits[row] =
        kernels::dot(model.head_w.data() + static_cast<std::size_t>(row) * kHiddenDim,
                     trace.post.data(), kHiddenDim) +
        model.head_b[row];

  ModelOutput out;
  out.logits = trace.logits;
  out.probs.resize(kHeadRows);
  for (int k = 0; k < kSlots; ++k)
    softmax_row(out.logits.data() + static_cast<std::size_t>(k) * kClasses,
                out.probs.data() + static_cast<std::size_t>(k) * kClasses);
  return {std::move(out), std::move(trace)};
}

ModelOutput forward_output(const SlotNet& model, const Image& img) {
  return forward(model, img).first;
}

Decoded decode(const ModelOutput& out) {
  Decoded d;
  for (int k = 0; k < kSlots; ++k) {
    int best = 0;
    for (int c = 1; c < kClasses; ++c)
      if (out.prob(k, c) > out.prob(k, best)) best = c;
    d.slot_argmax[static_cast<std::size_t>(k)] = best;
    if (best != kBlankClass) d.text.push_back(class_to_char(best));
  }
  return d;
}

double score_from_output(const ModelOutput& out, const ScoreSpec& spec) {
  check_spec(spec);
  if (const auto* g = std::get_if<GlobalScore>(&spec)) {
    double sum = 0.0;
    for (int k = 0; k < kSlots; ++k)
      sum += out.prob(k, g->target_labels[static_cast<std::size_t>(k)]);
    return sum / kSlots;
  }
  const auto& l = std::get<LocalScore>(spec);
  return out.prob(l.slot, l.target_class);
}

double score(const SlotNet& model, const Image& img, const ScoreSpec& spec) {
  return score_from_output(forward_output(model, img), spec);
}

namespace {

// d(score)/d(logits): softmax Jacobian applied to the score's probability
// weights. Global touches every slot (weight 1/8 each), Local one slot.
std::vector<double> logit_gradient(const ModelOutput& out, const ScoreSpec& spec) {
  std::vector<double> grad(kHeadRows, 0.0);
  auto add_slot = [&](int k, int target, double weight) {
    const double pt = out.prob(k, target);
    for (int c = 0; c < kClasses; ++c) {
      const double delta = (c == target) ? 1.0 : 0.0;
      grad[static_cast<std::size_t>(k) * kClasses + c] +=
          weight * pt * (delta - out.prob(k, c));
    }
  };
  if (const auto* g = std::get_if<GlobalScore>(&spec)) {
    for (int k = 0; k < kSlots; ++k)
      add_slot(k, g->target_labels[static_cast<std::size_t>(k)], 1.0 / kSlots);
  } else {
    const auto& l = std::get<LocalScore>(spec);
    add_slot(l.slot, l.target_class, 1.0);
  }
  return grad;
}

}  // namespace

AttributionMap score_gradient(const SlotNet& model, const Image& img,
                              const ScoreSpec& spec, const BackwardRule& rule) {
  check_spec(spec);
  if (rule.kind == BackwardRule::Kind::DeepLiftRescale && !rule.baseline)
    throw std::invalid_argument("DeepLiftRescale rule requires a baseline trace");

  auto [out, trace] = forward(model, img);
  const std::vector<double> grad_logits = logit_gradient(out, spec);

  std::vector<double> grad_post(kHiddenDim);
  kernels::matvec_t(model.head_w.data(), kHeadRows, kHiddenDim,
                    grad_logits.data(), grad_post.data());

  std::vector<double> grad_pre(kHiddenDim);
  const bool has_activation = model.activation == Activation::Relu;
  for (int h = 0; h < kHiddenDim; ++h) {
    const double g = grad_post[h];
    double factor = activate_deriv(model.activation, trace.pre[h]);
    if (has_activation) {
      switch (rule.kind) {
        case BackwardRule::Kind::Standard:
          break;
        case BackwardRule::Kind::Guided:
          if (g < 0.0) factor = 0.0;
          break;
        case BackwardRule::Kind::Deconv:
          factor = g < 0.0 ? 0.0 : 1.0;
          break;
        case BackwardRule::Kind::DeepLiftRescale: {
          const double dpre = trace.pre[h] - rule.baseline->pre[h];
          if (std::abs(dpre) >= kDeepLiftEps)
            factor = (trace.post[h] - rule.baseline->post[h]) / dpre;
          break;
        }
      }
    }
    grad_pre[h] = g * factor;
  }

  AttributionMap map(img.height, img.width);
  kernels::matvec_t(model.w1.data(), kHiddenDim, kInputDim, grad_pre.data(),
                    map.values.data());
  return map;
}

namespace {

std::array<int, kSlots> slot_targets(const std::string& label) {
  std::array<int, kSlots> targets{};
  targets.fill(kBlankClass);
  for (std::size_t k = 0; k < label.size(); ++k)
    targets[k] = char_to_class(label[k]);
  return targets;
}

}  // namespace

TrainResult train(SlotNet init, const std::vector<Sample>& dataset,
                  const TrainConfig& cfg) {
  if (dataset.empty()) throw std::invalid_argument("training dataset is empty");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");

  SlotNet net = std::move(init);
  const std::size_t n_w1 = net.w1.size(), n_hw = net.head_w.size();
  std::vector<double> vel_w1(n_w1, 0.0), vel_b1(kHiddenDim, 0.0);
  std::vector<double> vel_hw(n_hw, 0.0), vel_hb(kHeadRows, 0.0);

  const int n = static_cast<int>(dataset.size());
  std::vector<int> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(cfg.seed, 0x5f5f5f5fULL));

  const int max_b = cfg.batch_size;
  std::vector<double> xb(static_cast<std::size_t>(max_b) * kInputDim);
  std::vector<double> pre(static_cast<std::size_t>(max_b) * kHiddenDim);
  std::vector<double> post(static_cast<std::size_t>(max_b) * kHiddenDim);
  std::vector<double> logits(static_cast<std::size_t>(max_b) * kHeadRows);
  std::vector<double> grad_logits(static_cast<std::size_t>(max_b) * kHeadRows);
  std::vector<double> grad_post(static_cast<std::size_t>(max_b) * kHiddenDim);
  std::vector<double> head_w_t(static_cast<std::size_t>(kHiddenDim) * kHeadRows);
  std::vector<double> grad_w1(n_w1), grad_b1(kHiddenDim);
  std::vector<double> grad_hw(n_hw), grad_hb(kHeadRows);

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;

    for (int start = 0; start < n; start += max_b) {
      const int b = std::min(max_b, n - start);

      for (int i = 0; i < b; ++i)
        std::memcpy(xb.data() + static_cast<std::size_t>(i) * kInputDim,
                    dataset[static_cast<std::size_t>(order[start + i])].image.data.data(),
                    sizeof(double) * kInputDim);

      // forward
      kernels::gemm_nt(xb.data(), net.w1.data(), b, kHiddenDim, kInputDim, pre.data());
      for (int i = 0; i < b; ++i)
        for (int h = 0; h < kHiddenDim; ++h) {
          double& p = pre[static_cast<std::size_t>(i) * kHiddenDim + h];
          p += net.b1[h];
          post[static_cast<std::size_t>(i) * kHiddenDim + h] = activate(net.activation, p);
        }
      kernels::gemm_nt(post.data(), net.head_w.data(), b, kHeadRows, kHiddenDim,
                       logits.data());
      for (int i = 0; i < b; ++i)
        for (int row = 0; row < kHeadRows; ++row)
          logits[static_cast<std::size_t>(i) * kHeadRows + row] += net.head_b[row];

      // loss + logit gradients (mean CE over slots, mean over batch)
      double batch_loss = 0.0;
      const double inv = 1.0 / (static_cast<double>(b) * kSlots);
      for (int i = 0; i < b; ++i) {
        const auto targets =
            slot_targets(dataset[static_cast<std::size_t>(order[start + i])].label);
        for (int k = 0; k < kSlots; ++k) {
          double* row = logits.data() + static_cast<std::size_t>(i) * kHeadRows +
                        static_cast<std::size_t>(k) * kClasses;
          double* grow = grad_logits.data() + static_cast<std::size_t>(i) * kHeadRows +
                         static_cast<std::size_t>(k) * kClasses;
          double probs[kClasses];
          softmax_row(row, probs);
          const int t = targets[static_cast<std::size_t>(k)];
          batch_loss -= std::log(std::max(probs[t], 1e-300)) / kSlots;
          for (int c = 0; c < kClasses; ++c)
            grow[c] = (probs[c] - (c == t ? 1.0 : 0.0)) * inv;
        }
      }
      batch_loss /= b;
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch));
      epoch_loss += batch_loss * b;

      // backward
      kernels::gemm_tn(grad_logits.data(), post.data(), b, kHeadRows, kHiddenDim,
                       grad_hw.data());
      for (int row = 0; row < kHeadRows; ++row) {
        double s = 0.0;
        for (int i = 0; i < b; ++i)
          s += grad_logits[static_cast<std::size_t>(i) * kHeadRows + row];
        grad_hb[static_cast<std::size_t>(row)] = s;
      }
      for (int row = 0; row < kHeadRows; ++row)
        for (int h = 0; h < kHiddenDim; ++h)
          head_w_t[static_cast<std::size_t>(h) * kHeadRows + row] =
              net.head_w[static_cast<std::size_t>(row) * kHiddenDim + h];
      kernels::gemm_nt(grad_logits.data(), head_w_t.data(), b, kHiddenDim, kHeadRows,
                       grad_post.data());
      for (int i = 0; i < b; ++i)
        for (int h = 0; h < kHiddenDim; ++h) {
          const std::size_t idx = static_cast<std::size_t>(i) * kHiddenDim + h;
          grad_post[idx] *= activate_deriv(net.activation, pre[idx]);
        }
      kernels::gemm_tn(grad_post.data(), xb.data(), b, kHiddenDim, kInputDim,
                       grad_w1.data());
      for (int h = 0; h < kHiddenDim; ++h) {
        double s = 0.0;
        for (int i = 0; i < b; ++i)
          s += grad_post[static_cast<std::size_t>(i) * kHiddenDim + h];
        grad_b1[static_cast<std::size_t>(h)] = s;
      }

      // momentum SGD: v <- mu*v + g, theta <- theta - lr*v
      auto update = [&](std::vector<double>& theta, std::vector<double>& vel,
                        const std::vector<double>& grad) {
        for (std::size_t i = 0; i < theta.size(); ++i) {
          vel[i] = cfg.momentum * vel[i] + grad[i];
          theta[i] -= cfg.learning_rate * vel[i];
        }
      };
      update(net.w1, vel_w1, grad_w1);
      update(net.b1, vel_b1, grad_b1);
      update(net.head_w, vel_hw, grad_hw);
      update(net.head_b, vel_hb, grad_hb);
    }

    result.loss_history.push_back(epoch_loss / n);
  }

  result.model = std::move(net);
  return result;
}

double exact_match(const SlotNet& model, const std::vector<Sample>& dataset) {
  if (dataset.empty()) throw std::invalid_argument("dataset is empty");
  std::vector<std::uint8_t> hit(dataset.size(), 0);
#pragma omp parallel for schedule(dynamic) num_threads(kernels::thread_count())
  for (long i = 0; i < static_cast<long>(dataset.size()); ++i) {
    const auto& s = dataset[static_cast<std::size_t>(i)];
    hit[static_cast<std::size_t>(i)] =
        decode(forward_output(model, s.image)).text == s.label ? 1 : 0;
  }
  long correct = 0;
  for (std::uint8_t h : hit) correct += h;
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

namespace {

constexpr char kMagic[4] = {'S', 'X', 'M', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, const std::vector<double>& values) {
  for (double v : values) {
    float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (in.gcount() != 4) throw std::runtime_error("truncated model file: " + path);
  return static_cast<std::uint32_t>(buf[0]) | (static_cast<std::uint32_t>(buf[1]) << 8) |
         (static_cast<std::uint32_t>(buf[2]) << 16) |
         (static_cast<std::uint32_t>(buf[3]) << 24);
}

void get_f32(std::istream& in, std::vector<double>& values, const std::string& path) {
  for (double& v : values) {
    std::uint32_t bits = get_u32(in, path);
    float f;
    std::memcpy(&f, &bits, 4);
    v = static_cast<double>(f);
  }
}

}  // namespace

void save_model(const std::filesystem::path& path, const SlotNet& model) {
  std::string body(kMagic, 4);
  put_u32(body, kInputDim);
  put_u32(body, kHiddenDim);
  put_u32(body, kSlots);
  put_u32(body, kClasses);
  put_f32(body, model.w1);
  put_f32(body, model.b1);
  put_f32(body, model.head_w);
  put_f32(body, model.head_b);

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write model file: " + tmp.string());
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
  }
  std::filesystem::rename(tmp, path);
}

SlotNet load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("bad model magic in " + path.string());
  const std::string p = path.string();
  if (get_u32(in, p) != kInputDim || get_u32(in, p) != kHiddenDim ||
      get_u32(in, p) != kSlots || get_u32(in, p) != kClasses)
    throw std::runtime_error("model dims do not match this build: " + p);
  SlotNet model = SlotNet::zeros();
  get_f32(in, model.w1, p);
  get_f32(in, model.b1, p);
  get_f32(in, model.head_w, p);
  get_f32(in, model.head_b, p);
  return model;
}

MaskedEvaluator::MaskedEvaluator(const SlotNet& model, const Image& img,
                                 const SegmentMap& seg, double baseline)
    : model_(&model) {
  check_input(img);
  if (img.height != seg.height || img.width != seg.width)
    throw std::invalid_argument("image/segment dims differ");
  const int n = seg.segment_count;

  std::vector<double> full_pre(kHiddenDim);
  kernels::matvec(model.w1.data(), kHiddenDim, kInputDim, img.data.data(),
                  full_pre.data());
  for (int h = 0; h < kHiddenDim; ++h) full_pre[h] += model.b1[h];

  std::vector<double> diff(img.data.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = img.data[i] - baseline;

  deltas_.assign(static_cast<std::size_t>(n) * kHiddenDim, 0.0);
#pragma omp parallel for schedule(static) num_threads(kernels::thread_count())
  for (int h = 0; h < kHiddenDim; ++h) {
    const double* row = model_->w1.data() + static_cast<std::size_t>(h) * kInputDim;
    std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
    for (int j = 0; j < kInputDim; ++j)
      acc[static_cast<std::size_t>(seg.labels[static_cast<std::size_t>(j)])] +=
          row[j] * diff[static_cast<std::size_t>(j)];
    for (int s = 0; s < n; ++s)
      deltas_[static_cast<std::size_t>(s) * kHiddenDim + h] = acc[static_cast<std::size_t>(s)];
  }

  empty_pre_ = full_pre;
  for (int s = 0; s < n; ++s)
    for (int h = 0; h < kHiddenDim; ++h)
      empty_pre_[static_cast<std::size_t>(h)] -=
          deltas_[static_cast<std::size_t>(s) * kHiddenDim + h];
}

void MaskedEvaluator::hidden_post(const std::vector<std::uint8_t>& present,
                                  std::vector<double>& post) const {
  if (present.size() != static_cast<std::size_t>(segment_count()))
    throw std::invalid_argument("coalition size != segment count");
  post = empty_pre_;
  for (std::size_t s = 0; s < present.size(); ++s)
    if (present[s])
      kernels::axpy(1.0, deltas_.data() + s * kHiddenDim, post.data(), kHiddenDim);
  for (double& v : post) v = activate(model_->activation, v);
}

ModelOutput MaskedEvaluator::output(const std::vector<std::uint8_t>& present) const {
  std::vector<double> post;
  hidden_post(present, post);
  ModelOutput out;
  out.logits.resize(kHeadRows);
  for (int row = 0; row < kHeadRows; ++row)
    out.logits[static_cast<std::size_t>(row)] =
        kernels::dot(model_->head_w.data() + static_cast<std::size_t>(row) * kHiddenDim,
                     post.data(), kHiddenDim) +
        model_->head_b[static_cast<std::size_t>(row)];
  out.probs.resize(kHeadRows);
  for (int k = 0; k < kSlots; ++k)
    softmax_row(out.logits.data() + static_cast<std::size_t>(k) * kClasses,
                out.probs.data() + static_cast<std::size_t>(k) * kClasses);
  return out;
}

double MaskedEvaluator::score(const std::vector<std::uint8_t>& present,
                              const ScoreSpec& spec) const {
  check_spec(spec);
  std::vector<double> post;
  hidden_post(present, post);

  auto slot_prob = [&](int k, int target) {
    const double* w = model_->head_w.data() +
                      static_cast<std::size_t>(k) * kClasses * kHiddenDim;
    double logits[kClasses], probs[kClasses];
    for (int c = 0; c < kClasses; ++c)
      logits[c] = kernels::dot(w + static_cast<std::size_t>(c) * kHiddenDim,
                               post.data(), kHiddenDim) +
                  model_->head_b[static_cast<std::size_t>(k) * kClasses + c];
    softmax_row(logits, probs);
    return probs[target];
  };

  if (const auto* g = std::get_if<GlobalScore>(&spec)) {
    double sum = 0.0;
    for (int k = 0; k < kSlots; ++k)
      sum += slot_prob(k, g->target_labels[static_cast<std::size_t>(k)]);
    return sum / kSlots;
  }
  const auto& l = std::get<LocalScore>(spec);
  return slot_prob(l.slot, l.target_class);
}

}  // namespace seqattr
