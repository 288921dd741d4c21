#include "seqattr/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace seqattr {
namespace {

void atomic_write(const std::filesystem::path& path, const std::string& body) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

void validate_image(const Image& img) {
  if (img.height <= 0 || img.width <= 0 ||
      img.data.size() != static_cast<std::size_t>(img.height) * img.width)
    throw std::invalid_argument("image dims inconsistent with data length");
  for (double v : img.data)
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      throw std::invalid_argument("image intensity outside [0,1]");
}

void validate_segments(const SegmentMap& seg) {
  if (seg.labels.size() != static_cast<std::size_t>(seg.height) * seg.width)
    throw std::invalid_argument("segment map dims inconsistent");
  if (seg.segment_count <= 0)
    throw std::invalid_argument("segment_count must be positive");
  std::vector<char> seen(static_cast<std::size_t>(seg.segment_count), 0);
  for (int id : seg.labels) {
    if (id < 0 || id >= seg.segment_count)
      throw std::invalid_argument("segment id out of range");
    seen[static_cast<std::size_t>(id)] = 1;
  }
  for (char s : seen)
    if (!s) throw std::invalid_argument("segment id never occurs");
}

SegmentMap grid_segmentation(int height, int width, int cell) {
  if (cell <= 0 || height % cell != 0 || width % cell != 0)
    throw std::invalid_argument("cell size must divide both image dimensions");
  SegmentMap seg;
  seg.height = height;
  seg.width = width;
  const int cells_x = width / cell;
  seg.segment_count = (height / cell) * cells_x;
  seg.labels.resize(static_cast<std::size_t>(height) * width);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      seg.labels[static_cast<std::size_t>(r) * width + c] =
          (r / cell) * cells_x + (c / cell);
  return seg;
}

SegmentScores segment_means(const AttributionMap& attr, const SegmentMap& seg) {
  if (attr.height != seg.height || attr.width != seg.width)
    throw std::invalid_argument("attribution/segment dims differ");
  std::vector<double> sum(static_cast<std::size_t>(seg.segment_count), 0.0);
  std::vector<long> count(static_cast<std::size_t>(seg.segment_count), 0);
  for (std::size_t i = 0; i < attr.values.size(); ++i) {
    sum[static_cast<std::size_t>(seg.labels[i])] += attr.values[i];
    ++count[static_cast<std::size_t>(seg.labels[i])];
  }
  SegmentScores out;
  out.scores.resize(sum.size());
  for (std::size_t i = 0; i < sum.size(); ++i) {
    if (count[i] == 0) throw std::invalid_argument("segment id never occurs");
    out.scores[i] = sum[i] / static_cast<double>(count[i]);
  }
  return out;
}

Image mask_segments(const Image& img, const SegmentMap& seg,
                    std::span<const int> removed, double baseline) {
  if (img.height != seg.height || img.width != seg.width)
    throw std::invalid_argument("image/segment dims differ");
  std::vector<char> drop(static_cast<std::size_t>(seg.segment_count), 0);
  for (int id : removed) {
    if (id < 0 || id >= seg.segment_count)
      throw std::invalid_argument("removed segment id out of range");
    drop[static_cast<std::size_t>(id)] = 1;
  }
  Image out = img;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    if (drop[static_cast<std::size_t>(seg.labels[i])]) out.data[i] = baseline;
  return out;
}

AttributionMap scores_to_map(const SegmentScores& scores,
                             const SegmentMap& seg) {
  if (scores.scores.size() != static_cast<std::size_t>(seg.segment_count))
    throw std::invalid_argument("score count != segment count");
  AttributionMap map(seg.height, seg.width);
  for (std::size_t i = 0; i < map.values.size(); ++i)
    map.values[i] = scores.scores[static_cast<std::size_t>(seg.labels[i])];
  return map;
}

std::uint8_t quantize_intensity(double v) {
  double q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<std::uint8_t>(q);
}

ColorRaster render_heatmap(const Image& img, const AttributionMap& attr) {
  if (img.height != attr.height || img.width != attr.width)
    throw std::invalid_argument("image/attribution dims differ");
  double peak = 0.0;
  for (double v : attr.values) peak = std::max(peak, std::abs(v));

  ColorRaster out;
  out.height = img.height;
  out.width = img.width;
  out.rgb.resize(img.size() * 3);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double gray = img.data[i];
    double r = gray, g = gray, b = gray;
    if (peak > 0.0) {
      const double v = attr.values[i];
      const double w = std::abs(v) / peak;
      if (v >= 0.0) {
        r = (1.0 - w) * gray;
        g = (1.0 - w) * gray + w;
        b = (1.0 - w) * gray;
      } else {
        r = (1.0 - w) * gray + w;
        g = (1.0 - w) * gray;
        b = (1.0 - w) * gray;
      }
    }
    out.rgb[3 * i] = quantize_intensity(r);
    out.rgb[3 * i + 1] = quantize_intensity(g);
    out.rgb[3 * i + 2] = quantize_intensity(b);
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const Image& img) {
  validate_image(img);
  std::string body = "P5\n" + std::to_string(img.width) + " " +
                     std::to_string(img.height) + "\n255\n";
  body.reserve(body.size() + img.size());
  for (double v : img.data) body.push_back(static_cast<char>(quantize_intensity(v)));
  atomic_write(path, body);
}

namespace {

// Reads the next PNM header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open PGM file: " + path.string());
  if (next_token(in) != "P5")
    throw std::runtime_error("not a binary PGM (P5) file: " + path.string());
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(next_token(in));
    height = std::stoi(next_token(in));
    maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw std::runtime_error("malformed PGM header: " + path.string());
  }
  if (width <= 0 || height <= 0 || maxval != 255)
    throw std::runtime_error("unsupported PGM header: " + path.string());
  Image img(height, width);
  std::vector<char> raw(img.size());
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw std::runtime_error("truncated PGM raster: " + path.string());
  for (std::size_t i = 0; i < raw.size(); ++i)
    img.data[i] = static_cast<double>(static_cast<std::uint8_t>(raw[i])) / 255.0;
  return img;
}

void write_ppm(const std::filesystem::path& path, const ColorRaster& raster) {
  if (raster.rgb.size() != static_cast<std::size_t>(raster.height) * raster.width * 3)
    throw std::invalid_argument("raster dims inconsistent with data length");
  std::string body = "P6\n" + std::to_string(raster.width) + " " +
                     std::to_string(raster.height) + "\n255\n";
  body.append(reinterpret_cast<const char*>(raster.rgb.data()), raster.rgb.size());
  atomic_write(path, body);
}

}  // namespace seqattr
