#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "seqattr/image.hpp"
#include "seqattr/synthtext.hpp"

namespace seqattr {

inline constexpr int kInputDim = kImageHeight * kImageWidth;  // 4096
inline constexpr int kHiddenDim = 256;
inline constexpr int kSlots = 8;
inline constexpr int kClasses = 37;  // 0 = blank, 1..26 = a..z, 27..36 = 0..9
inline constexpr int kBlankClass = 0;

int char_to_class(char c);
char class_to_char(int cls);  // cls in 1..36

enum class Activation { Relu, Identity };

// Slot-based sequence recognizer: a dense hidden layer over the full image
// feeding 8 independent per-slot classification heads. The full-image first
// layer is deliberate - every character's score depends on every pixel, so
// sequence-level and per-character explanations genuinely differ.
struct SlotNet {
  std::vector<double> w1;      // kHiddenDim x kInputDim, row-major
  std::vector<double> b1;      // kHiddenDim
  std::vector<double> head_w;  // (kSlots*kClasses) x kHiddenDim, row-major
  std::vector<double> head_b;  // kSlots*kClasses
  Activation activation = Activation::Relu;

  static SlotNet zeros();
  static SlotNet random_init(std::uint64_t seed);
};

struct ModelOutput {
  std::vector<double> logits;  // kSlots x kClasses
  std::vector<double> probs;   // kSlots x kClasses, each slot row sums to 1

  double logit(int slot, int cls) const { return logits[static_cast<std::size_t>(slot) * kClasses + cls]; }
  double prob(int slot, int cls) const { return probs[static_cast<std::size_t>(slot) * kClasses + cls]; }
};

// Hidden-layer state of one forward pass, kept around for the backward rules.
struct ForwardTrace {
  std::vector<double> pre;   // kHiddenDim, before activation
  std::vector<double> post;  // kHiddenDim, after activation
  std::vector<double> logits;
};

std::pair<ModelOutput, ForwardTrace> forward(const SlotNet& model, const Image& img);
ModelOutput forward_output(const SlotNet& model, const Image& img);

struct Decoded {
  std::string text;  // non-blank argmax chars concatenated in slot order
  std::array<int, kSlots> slot_argmax{};
};

// Per-slot argmax with ties resolved toward the lowest class index.
Decoded decode(const ModelOutput& out);

// Scalar scores the attribution methods explain. Global averages the target
// label's probability over all slots; Local reads a single slot/class entry.
struct GlobalScore {
  std::array<int, kSlots> target_labels{};
};
struct LocalScore {
  int slot = 0;
  int target_class = 0;
};
using ScoreSpec = std::variant<GlobalScore, LocalScore>;

double score_from_output(const ModelOutput& out, const ScoreSpec& spec);
double score(const SlotNet& model, const Image& img, const ScoreSpec& spec);

// How gradients are pushed through the hidden activation:
//   Standard        - exact derivative
//   Guided          - zero where pre-activation <= 0 or incoming gradient < 0
//   Deconv          - zero where incoming gradient < 0
//   DeepLiftRescale - multiply by (delta post / delta pre) against a baseline
//                     trace, standard derivative where |delta pre| < 1e-9
// With an Identity activation there is no activation step to modify, so all
// rules coincide.
struct BackwardRule {
  enum class Kind { Standard, Guided, Deconv, DeepLiftRescale };
  Kind kind = Kind::Standard;
  std::optional<ForwardTrace> baseline;  // required for DeepLiftRescale

  static BackwardRule standard() { return {Kind::Standard, std::nullopt}; }
  static BackwardRule guided() { return {Kind::Guided, std::nullopt}; }
  static BackwardRule deconv() { return {Kind::Deconv, std::nullopt}; }
  static BackwardRule deeplift_rescale(ForwardTrace baseline_trace) {
    return {Kind::DeepLiftRescale, std::move(baseline_trace)};
  }
};

// d(score)/d(pixel) under the chosen rule. For DeepLiftRescale the result is
// the input-layer multiplier; the caller is responsible for the (x - x0)
// product.
AttributionMap score_gradient(const SlotNet& model, const Image& img,
                              const ScoreSpec& spec, const BackwardRule& rule);

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  int batch_size = 32;
  int epochs = 30;
  std::uint64_t seed = 0;
};

struct TrainResult {
  SlotNet model;
  std::vector<double> loss_history;  // mean loss per epoch
};

// Minimizes mean per-slot cross-entropy with slot-aligned targets (char k in
// slot k, blank elsewhere) by momentum SGD with seeded shuffling. Throws on
// an empty dataset or a non-finite loss.
TrainResult train(SlotNet init, const std::vector<Sample>& dataset,
                  const TrainConfig& cfg);

// Fraction of samples whose decoded text equals the label exactly.
double exact_match(const SlotNet& model, const std::vector<Sample>& dataset);

// Binary model format: magic "SXM1", dims as little-endian uint32, then all
// parameters as little-endian float32 in declaration order.
void save_model(const std::filesystem::path& path, const SlotNet& model);
SlotNet load_model(const std::filesystem::path& path);

// Fast masked forwards for one (model, image, segmentation, baseline) tuple.
// The first layer is affine in the input, so masking segment s shifts the
// hidden pre-activation by a fixed per-segment delta; coalition evaluations
// then cost O(hidden * |coalition|) plus the heads instead of a full matvec.
// Results agree with mask_segments + forward to ~1e-12 (summation order
// differs) and are bit-stable for a fixed coalition regardless of threads.
class MaskedEvaluator {
 public:
  MaskedEvaluator(const SlotNet& model, const Image& img, const SegmentMap& seg,
                  double baseline);

  int segment_count() const { return static_cast<int>(deltas_.size() / kHiddenDim); }

  // present[s] != 0 keeps segment s; absent segments are masked to baseline.
  ModelOutput output(const std::vector<std::uint8_t>& present) const;
  double score(const std::vector<std::uint8_t>& present, const ScoreSpec& spec) const;

 private:
  void hidden_post(const std::vector<std::uint8_t>& present,
                   std::vector<double>& post) const;

  const SlotNet* model_;
  std::vector<double> empty_pre_;  // pre-activation with every segment masked
  std::vector<double> deltas_;     // segment_count x kHiddenDim
};

}  // namespace seqattr
