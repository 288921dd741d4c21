#include "seqattr/synthtext.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace seqattr {
namespace {

// 5x7 bitmap font for [a-z0-9], one string per row, '#' marks foreground.
// Hand-drawn in the spirit of classic character-LCD fonts.
struct Glyph {
  const char* rows[7];
};

constexpr Glyph kFont[36] = {
    // a
    {{".....", ".....", ".###.", "....#", ".####", "#...#", ".####"}},
    // b
    {{"#....", "#....", "#.##.", "##..#", "#...#", "#...#", "####."}},
    // c
    {{".....", ".....", ".###.", "#....", "#....", "#...#", ".###."}},
    // d
    {{"....#", "....#", ".##.#", "#..##", "#...#", "#...#", ".####"}},
    // e
    {{".....", ".....", ".###.", "#...#", "#####", "#....", ".###."}},
    // f
    {{"..##.", ".#..#", ".#...", "###..", ".#...", ".#...", ".#..."}},
    // g
    {{".....", ".####", "#...#", "#...#", ".####", "....#", ".###."}},
    // h
    {{"#....", "#....", "#.##.", "##..#", "#...#", "#...#", "#...#"}},
    // i
    {{"..#..", ".....", ".##..", "..#..", "..#..", "..#..", ".###."}},
    // j
    {{"...#.", ".....", "..##.", "...#.", "...#.", "#..#.", ".##.."}},
    // k
    {{"#....", "#....", "#..#.", "#.#..", "##...", "#.#..", "#..#."}},
    // l
    {{".##..", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."}},
    // m
    {{".....", ".....", "##.#.", "#.#.#", "#.#.#", "#.#.#", "#.#.#"}},
    // n
    {{".....", ".....", "#.##.", "##..#", "#...#", "#...#", "#...#"}},
    // o
    {{".....", ".....", ".###.", "#...#", "#...#", "#...#", ".###."}},
    // p
    {{".....", ".....", "####.", "#...#", "####.", "#....", "#...."}},
    // q
    {{".....", ".....", ".##.#", "#..##", ".####", "....#", "....#"}},
    // r
    {{".....", ".....", "#.##.", "##..#", "#....", "#....", "#...."}},
    // s
    {{".....", ".....", ".###.", "#....", ".###.", "....#", "####."}},
    // t
    {{".#...", ".#...", "###..", ".#...", ".#...", ".#..#", "..##."}},
    // u
    {{".....", ".....", "#...#", "#...#", "#...#", "#..##", ".##.#"}},
    // v
    {{".....", ".....", "#...#", "#...#", "#...#", ".#.#.", "..#.."}},
    // w
    {{".....", ".....", "#...#", "#...#", "#.#.#", "#.#.#", ".#.#."}},
    // x
    {{".....", ".....", "#...#", ".#.#.", "..#..", ".#.#.", "#...#"}},
    // y
    {{".....", ".....", "#...#", "#...#", ".####", "....#", ".###."}},
    // z
    {{".....", ".....", "#####", "...#.", "..#..", ".#...", "#####"}},
    // 0
    {{".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."}},
    // 1
    {{"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."}},
    // 2
    {{".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"}},
    // 3
    {{"#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."}},
    // 4
    {{"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."}},
    // 5
    {{"#####", "#....", "####.", "....#", "....#", "#...#", ".###."}},
    // 6
    {{"..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."}},
    // 7
    {{"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."}},
    // 8
    {{".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."}},
    // 9
    {{".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."}},
};

constexpr int kGlyphCols = 5;
constexpr int kGlyphRows = 7;
constexpr int kGlyphScale = 2;
constexpr int kGlyphW = kGlyphCols * kGlyphScale;   // 10
constexpr int kGlyphH = kGlyphRows * kGlyphScale;   // 14
constexpr int kJitter = 2;

int charset_index(char c) {
  auto pos = kCharset.find(c);
  if (pos == std::string_view::npos)
    throw std::invalid_argument(std::string("character outside charset: '") + c + "'");
  return static_cast<int>(pos);
}

void validate_label(const std::string& label) {
  if (label.empty() || label.size() > static_cast<std::size_t>(kMaxLabelLength))
    throw std::invalid_argument("label length must be 1.." +
                                std::to_string(kMaxLabelLength) + ": \"" + label + "\"");
  for (char c : label) charset_index(c);
}

void quantize_in_place(Image& img) {
  for (double& v : img.data)
    v = static_cast<double>(quantize_intensity(v)) / 255.0;
}

// Bresenham stroke that leaves the glyph boxes untouched.
void draw_stroke(Image& img, const std::vector<Box>& keep_clear, int r0, int c0,
                 int r1, int c1, double intensity) {
  const int dc = std::abs(c1 - c0), sc = c0 < c1 ? 1 : -1;
  const int dr = -std::abs(r1 - r0), sr = r0 < r1 ? 1 : -1;
  int err = dc + dr;
  while (true) {
    bool inside_glyph = false;
    for (const Box& b : keep_clear)
      if (b.contains(r0, c0)) {
        inside_glyph = true;
        break;
      }
    if (!inside_glyph) img.at(r0, c0) = intensity;
    if (r0 == r1 && c0 == c1) break;
    const int e2 = 2 * err;
    if (e2 >= dr) {
      err += dr;
      c0 += sc;
    }
    if (e2 <= dc) {
      err += dc;
      r0 += sr;
    }
  }
}

}  // namespace

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Clean: return "clean";
    case Variant::Noisy: return "noisy";
    case Variant::Distractor: return "distractor";
    case Variant::LowContrast: return "lowcontrast";
  }
  return "?";
}

std::optional<Variant> parse_variant(std::string_view name) {
  for (Variant v : {Variant::Clean, Variant::Noisy, Variant::Distractor, Variant::LowContrast})
    if (name == variant_name(v)) return v;
  return std::nullopt;
}

double variant_background(Variant v) {
  return v == Variant::LowContrast ? 0.35 : 0.1;
}

double variant_foreground(Variant v) {
  return v == Variant::LowContrast ? 0.60 : 0.9;
}

Sample render_sample(const std::string& label, Variant variant, Rng& rng) {
  validate_label(label);
  const double bg = variant_background(variant);
  const double fg = variant_foreground(variant);

  Sample sample;
  sample.label = label;
  sample.image = Image(kImageHeight, kImageWidth, bg);

  for (std::size_t k = 0; k < label.size(); ++k) {
    const int jx = static_cast<int>(rng.uniform_below(2 * kJitter + 1)) - kJitter;
    const int jy = static_cast<int>(rng.uniform_below(2 * kJitter + 1)) - kJitter;
    const int x = static_cast<int>(k) * kSlotWidth + (kSlotWidth - kGlyphW) / 2 + jx;
    const int y = (kImageHeight - kGlyphH) / 2 + jy;
    sample.slot_boxes.push_back(Box{x, y, kGlyphW, kGlyphH});

    const Glyph& glyph = kFont[charset_index(label[k])];
    for (int gr = 0; gr < kGlyphRows; ++gr)
      for (int gc = 0; gc < kGlyphCols; ++gc)
        if (glyph.rows[gr][gc] == '#')
          for (int dy = 0; dy < kGlyphScale; ++dy)
            for (int dx = 0; dx < kGlyphScale; ++dx)
              sample.image.at(y + gr * kGlyphScale + dy, x + gc * kGlyphScale + dx) = fg;
  }

  if (variant == Variant::Distractor) {
    const int strokes = 1 + static_cast<int>(rng.uniform_below(3));
    for (int s = 0; s < strokes; ++s) {
      const int r0 = static_cast<int>(rng.uniform_below(kImageHeight));
      const int c0 = static_cast<int>(rng.uniform_below(kImageWidth));
      const int r1 = static_cast<int>(rng.uniform_below(kImageHeight));
      const int c1 = static_cast<int>(rng.uniform_below(kImageWidth));
      draw_stroke(sample.image, sample.slot_boxes, r0, c0, r1, c1, fg);
    }
  }

  if (variant == Variant::Noisy) {
    for (double& v : sample.image.data)
      v = std::clamp(v + rng.normal(0.0, 0.08), 0.0, 1.0);
  }

  quantize_in_place(sample.image);
  return sample;
}

std::vector<Sample> generate_dataset(const DatasetSpec& spec) {
  if (spec.size < 1) throw std::invalid_argument("dataset size must be >= 1");
  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(spec.size));
  for (int i = 0; i < spec.size; ++i) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
    const int len = 1 + static_cast<int>(rng.uniform_below(kMaxLabelLength));
    std::string label;
    for (int k = 0; k < len; ++k)
      label.push_back(kCharset[rng.uniform_below(kCharset.size())]);
    samples.push_back(render_sample(label, spec.variant, rng));
  }
  return samples;
}

namespace {

std::string sample_filename(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05zu.pgm", index);
  return buf;
}

std::string boxes_to_string(const std::vector<Box>& boxes) {
  std::string out;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(boxes[i].x) + "," + std::to_string(boxes[i].y) + "," +
           std::to_string(boxes[i].w) + "," + std::to_string(boxes[i].h);
  }
  return out;
}

std::vector<Box> parse_boxes(const std::string& text, int line_no) {
  std::vector<Box> boxes;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ';')) {
    Box b;
    if (std::sscanf(part.c_str(), "%d,%d,%d,%d", &b.x, &b.y, &b.w, &b.h) != 4)
      throw std::runtime_error("labels.tsv line " + std::to_string(line_no) +
                               ": malformed box \"" + part + "\"");
    boxes.push_back(b);
  }
  return boxes;
}

}  // namespace

void save_dataset(const std::vector<Sample>& samples,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  std::string tsv;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string name = sample_filename(i);
    write_pgm(dir / "images" / name, samples[i].image);
    tsv += name + "\t" + samples[i].label + "\t" +
           boxes_to_string(samples[i].slot_boxes) + "\n";
  }
  const std::filesystem::path tsv_path = dir / "labels.tsv";
  std::filesystem::path tmp = tsv_path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << tsv;
  }
  std::filesystem::rename(tmp, tsv_path);
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
  const std::filesystem::path tsv_path = dir / "labels.tsv";
  std::ifstream in(tsv_path);
  if (!in) throw std::runtime_error("cannot open " + tsv_path.string());

  std::vector<Sample> samples;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? std::string::npos
                                                : line.find('\t', tab1 + 1);
    if (tab1 == std::string::npos || tab2 == std::string::npos)
      throw std::runtime_error("labels.tsv line " + std::to_string(line_no) +
                               ": expected 3 tab-separated fields");
    Sample s;
    const std::string filename = line.substr(0, tab1);
    s.label = line.substr(tab1 + 1, tab2 - tab1 - 1);
    try {
      validate_label(s.label);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("labels.tsv line " + std::to_string(line_no) +
                               ": " + e.what());
    }
    s.slot_boxes = parse_boxes(line.substr(tab2 + 1), line_no);
    if (s.slot_boxes.size() != s.label.size())
      throw std::runtime_error("labels.tsv line " + std::to_string(line_no) +
                               ": box count does not match label length");
    const std::filesystem::path img_path = dir / "images" / filename;
    if (!std::filesystem::exists(img_path))
      throw std::runtime_error("missing image file: " + img_path.string());
    s.image = read_pgm(img_path);
    if (s.image.height != kImageHeight || s.image.width != kImageWidth)
      throw std::runtime_error("unexpected image dims in " + img_path.string());
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace seqattr
