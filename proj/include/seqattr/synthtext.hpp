#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "seqattr/image.hpp"
#include "seqattr/rng.hpp"

namespace seqattr {

// Recognition alphabet. Class index 0 is the blank; classes 1..36 map onto
// this charset in order.
inline constexpr std::string_view kCharset = "abcdefghijklmnopqrstuvwxyz0123456789";
inline constexpr int kMaxLabelLength = 8;
inline constexpr int kSlotWidth = kImageWidth / kMaxLabelLength;  // 16

enum class Variant { Clean, Noisy, Distractor, LowContrast };

std::string_view variant_name(Variant v);
std::optional<Variant> parse_variant(std::string_view name);

// Pixel rectangle, top-left corner plus extent.
struct Box {
  int x = 0, y = 0, w = 0, h = 0;
  bool contains(int row, int col) const {
    return col >= x && col < x + w && row >= y && row < y + h;
  }
  bool operator==(const Box&) const = default;
};

struct Sample {
  Image image;
  std::string label;               // 1..8 chars over kCharset
  std::vector<Box> slot_boxes;     // one glyph box per label character
  bool operator==(const Sample&) const = default;
};

struct DatasetSpec {
  std::string name;
  int size = 0;
  Variant variant = Variant::Clean;
  std::uint64_t seed = 0;
};

// Renders `label` onto the canvas, one character per 32x16 slot, from the
// built-in 5x7 font at 2x scale with +-2px placement jitter. Variant effects:
//   Clean       - nothing extra
//   Noisy       - additive Gaussian noise, sigma 0.08, clamped to [0,1]
//   Distractor  - 1..3 random line strokes outside the glyph boxes
//   LowContrast - foreground/background gap narrowed to 0.25
// The result is quantized to the 255-level grid so PGM round-trips are exact.
// Consumes a fixed number of draws from `rng` in a fixed order, so the output
// is a pure function of (label, variant, rng state).
Sample render_sample(const std::string& label, Variant variant, Rng& rng);

// `spec.size` samples with labels drawn uniformly (length U{1..8}, chars
// uniform over the charset). Sample i uses the sub-stream
// derive_seed(spec.seed, i), so regeneration of any prefix is stable.
std::vector<Sample> generate_dataset(const DatasetSpec& spec);

// Directory layout: <dir>/images/NNNNN.pgm plus <dir>/labels.tsv with lines
// "NNNNN.pgm<TAB>label<TAB>x,y,w,h;...". load(save(d)) == d bit-exactly.
void save_dataset(const std::vector<Sample>& samples,
                  const std::filesystem::path& dir);
std::vector<Sample> load_dataset(const std::filesystem::path& dir);

// Foreground/background intensities per variant (exposed for tests).
double variant_background(Variant v);
double variant_foreground(Variant v);

}  // namespace seqattr
