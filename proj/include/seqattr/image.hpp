#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace seqattr {

// Fixed recognizer canvas. Every raster in the project is 32x128; the
// segment grids below rely on the cell size dividing both dimensions.
inline constexpr int kImageHeight = 32;
inline constexpr int kImageWidth = 128;

// Grayscale raster, row-major, intensities in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
  std::size_t size() const { return data.size(); }

  bool operator==(const Image&) const = default;
};

// Throws std::invalid_argument if dims are inconsistent or any intensity is
// non-finite or outside [0,1].
void validate_image(const Image& img);

// Partition of the canvas into feature segments. Every label lies in
// [0, segment_count) and every id in that range occurs at least once.
struct SegmentMap {
  int height = 0;
  int width = 0;
  std::vector<int> labels;
  int segment_count = 0;

  int label_at(int r, int c) const { return labels[static_cast<std::size_t>(r) * width + c]; }

  bool operator==(const SegmentMap&) const = default;
};

void validate_segments(const SegmentMap& seg);

// Signed per-pixel relevance values. Same dims as the explained image.
struct AttributionMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  AttributionMap() = default;
  AttributionMap(int h, int w, double fill = 0.0)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }

  bool operator==(const AttributionMap&) const = default;
};

// One score per segment id.
struct SegmentScores {
  std::vector<double> scores;
  bool operator==(const SegmentScores&) const = default;
};

// Regular grid with square cells of side `cell`, ids assigned row-major over
// cells. Throws if cell does not divide both dimensions.
SegmentMap grid_segmentation(int height, int width, int cell);

// scores[i] = mean of attr over pixels labelled i.
SegmentScores segment_means(const AttributionMap& attr, const SegmentMap& seg);

// Pixels of the listed segments are replaced by `baseline`; everything else
// passes through untouched. Throws on out-of-range segment ids.
Image mask_segments(const Image& img, const SegmentMap& seg,
                    std::span<const int> removed, double baseline);

// Expand per-segment scores to a per-pixel map (each pixel carries its
// segment's score).
AttributionMap scores_to_map(const SegmentScores& scores,
                             const SegmentMap& seg);

// 8-bit RGB raster.
struct ColorRaster {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;  // 3 bytes per pixel, row-major
  bool operator==(const ColorRaster&) const = default;
};

// Overlay the attribution on the grayscale base: positive values blend the
// pixel toward green, negative toward red, with blend weight |v| / max|v|
// over the whole map. An all-zero map yields the plain grayscale render.
ColorRaster render_heatmap(const Image& img, const AttributionMap& attr);

// Binary PGM (P5) / PPM (P6), maxval 255. Intensities are quantized to the
// k/255 grid on write and mapped back to [0,1] on read.
void write_pgm(const std::filesystem::path& path, const Image& img);
Image read_pgm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const ColorRaster& raster);

std::uint8_t quantize_intensity(double v);

}  // namespace seqattr
