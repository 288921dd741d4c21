#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "seqattr/synthtext.hpp"

using namespace seqattr;
namespace fs = std::filesystem;

TEST_CASE("render_sample is deterministic") {
  Rng a(1), b(1);
  const Sample s1 = render_sample("a", Variant::Clean, a);
  const Sample s2 = render_sample("a", Variant::Clean, b);
  CHECK(s1 == s2);
}

TEST_CASE("glyphs stay inside their slots") {
  Rng rng(4);
  const Sample s = render_sample("abc", Variant::Clean, rng);
  const double bg = variant_background(Variant::Clean);
  const double bg_q = static_cast<double>(quantize_intensity(bg)) / 255.0;
  for (int r = 0; r < kImageHeight; ++r)
    for (int c = 48; c < kImageWidth; ++c)
      CHECK(s.image.at(r, c) == bg_q);

  // every foreground pixel of character k lies inside slot k's columns
  for (std::size_t k = 0; k < s.label.size(); ++k) {
    const Box& box = s.slot_boxes[k];
    CHECK(box.x >= static_cast<int>(k) * kSlotWidth);
    CHECK(box.x + box.w <= static_cast<int>(k + 1) * kSlotWidth);
  }
  for (int r = 0; r < kImageHeight; ++r)
    for (int c = 0; c < 48; ++c)
      if (s.image.at(r, c) != bg_q)
        CHECK(s.slot_boxes[static_cast<std::size_t>(c / kSlotWidth)].contains(r, c));
}

TEST_CASE("noisy variant perturbs around the clean twin") {
  // Oracle: render the clean twin with the same stream and compare. With
  // sigma = 0.08 the mean absolute deviation of clamped Gaussian noise sits
  // near sigma * sqrt(2/pi) ~ 0.064; quantization adds at most 1/510.
  Rng noisy_rng(7);
  const Sample noisy = render_sample("hello", Variant::Noisy, noisy_rng);
  Rng clean_rng(7);
  const Sample clean = render_sample("hello", Variant::Clean, clean_rng);

  double mean_abs = 0.0;
  for (std::size_t i = 0; i < noisy.image.data.size(); ++i)
    mean_abs += std::abs(noisy.image.data[i] - clean.image.data[i]);
  mean_abs /= static_cast<double>(noisy.image.data.size());
  CHECK(mean_abs > 0.04);
  CHECK(mean_abs < 0.09);
}

TEST_CASE("distractor strokes avoid glyph boxes") {
  Rng rng(13);
  const Sample s = render_sample("xy", Variant::Distractor, rng);
  Rng rng2(13);
  const Sample clean = render_sample("xy", Variant::Clean, rng2);
  // inside the glyph boxes the two renders agree
  for (int r = 0; r < kImageHeight; ++r)
    for (int c = 0; c < kImageWidth; ++c)
      for (const Box& b : s.slot_boxes)
        if (b.contains(r, c)) CHECK(s.image.at(r, c) == clean.image.at(r, c));
  // and something outside changed
  CHECK(s.image != clean.image);
}

TEST_CASE("render_sample rejects bad labels") {
  Rng rng(1);
  CHECK_THROWS_AS(render_sample("", Variant::Clean, rng), std::invalid_argument);
  CHECK_THROWS_AS(render_sample("abc!", Variant::Clean, rng), std::invalid_argument);
  CHECK_THROWS_AS(render_sample("abcdefghi", Variant::Clean, rng), std::invalid_argument);
  CHECK_THROWS_AS(render_sample("ABC", Variant::Clean, rng), std::invalid_argument);
}

TEST_CASE("generate_dataset is reproducible and uniform-ish") {
  const DatasetSpec spec{"t", 10, Variant::Clean, 3};
  const auto a = generate_dataset(spec);
  const auto b = generate_dataset(spec);
  REQUIRE(a.size() == 10);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].label == b[i].label);
    CHECK(a[i] == b[i]);
  }

  // mean label length over U{1..8} is 4.5
  const DatasetSpec big{"t", 1000, Variant::Clean, 17};
  const auto samples = generate_dataset(big);
  double mean_len = 0.0;
  for (const Sample& s : samples) mean_len += static_cast<double>(s.label.size());
  mean_len /= static_cast<double>(samples.size());
  CHECK(mean_len > 4.2);
  CHECK(mean_len < 4.8);

  CHECK_THROWS_AS(generate_dataset(DatasetSpec{"t", 0, Variant::Clean, 1}),
                  std::invalid_argument);
}

TEST_CASE("dataset save/load round-trips bit-exactly") {
  const DatasetSpec spec{"rt", 10, Variant::Noisy, 5};
  const auto samples = generate_dataset(spec);
  const fs::path dir = fs::temp_directory_path() / "seqattr_rt_ds";
  fs::remove_all(dir);
  save_dataset(samples, dir);
  const auto loaded = load_dataset(dir);
  REQUIRE(loaded.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) CHECK(loaded[i] == samples[i]);
  fs::remove_all(dir);
}

TEST_CASE("dataset loading reports broken inputs") {
  const fs::path dir = fs::temp_directory_path() / "seqattr_bad_ds";
  fs::remove_all(dir);
  const auto samples = generate_dataset(DatasetSpec{"x", 2, Variant::Clean, 9});
  save_dataset(samples, dir);

  SUBCASE("bad charset in labels.tsv names the line") {
    std::ofstream out(dir / "labels.tsv", std::ios::app);
    out << "00001.pgm\t\xC3\xA9\t1,2,3,4\n";
    out.close();
    try {
      load_dataset(dir);
      FAIL("expected a load error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }

  SUBCASE("missing image file is named") {
    fs::remove(dir / "images" / "00001.pgm");
    try {
      load_dataset(dir);
      FAIL("expected a load error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("00001.pgm") != std::string::npos);
    }
  }

  SUBCASE("malformed line names the line") {
    std::ofstream out(dir / "labels.tsv", std::ios::app);
    out << "nonsense without tabs\n";
    out.close();
    try {
      load_dataset(dir);
      FAIL("expected a load error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }

  fs::remove_all(dir);
}
