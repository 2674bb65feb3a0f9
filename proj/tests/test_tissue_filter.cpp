#include <doctest.h>

#include <random>

#include "slidesim/error.hpp"
#include "slidesim/tissue_filter.hpp"
#include "test_util.hpp"

using namespace slidesim;

namespace {

PatchPixels gray_patch(std::uint8_t v, int size = 224) {
  return {PatchRef{"P", Magnification{}, 0, 0, size}, test::uniform_raster(size, size, v, v, v)};
}

}  // namespace

TEST_CASE("luminance") {
  CHECK(luminance(255, 255, 255) == 255);
  CHECK(luminance(0, 0, 0) == 0);
  // round(0.299 * 255) = round(76.245)
  CHECK(luminance(255, 0, 0) == 76);
  CHECK(luminance(0, 255, 0) == 150);  // round(149.685)
  CHECK(luminance(0, 0, 255) == 29);   // round(29.07)

  std::mt19937 rng(3);
  for (int i = 0; i < 10000; ++i) {
    const auto r = static_cast<std::uint8_t>(rng()), g = static_cast<std::uint8_t>(rng()),
               b = static_cast<std::uint8_t>(rng());
    const long expected = std::lround(0.299 * r + 0.587 * g + 0.114 * b);
    // Half-way cases may legitimately round either way in binary floating point.
    CHECK(std::abs(luminance(r, g, b) - expected) <= (std::abs(0.299 * r + 0.587 * g + 0.114 * b - expected) > 0.4999 ? 1 : 0));
  }

  Raster img = test::uniform_raster(2, 1, 255, 0, 0);
  CHECK(luminance(img) == std::vector<std::uint8_t>{76, 76});
}

TEST_CASE("histogram3 bins") {
  FilterConfig cfg;  // a = 85, b = 170
  CHECK(histogram3(gray_patch(255), cfg) == HistogramTriple{0, 0, 50176});
  CHECK(histogram3(gray_patch(0), cfg) == HistogramTriple{50176, 0, 0});

  PatchPixels half = gray_patch(100);
  test::fill_rect(half.data, 0, 112, 224, 112, 200);
  CHECK(histogram3(half, cfg) == HistogramTriple{0, 25088, 25088});

  // Closed/half-open edges: a lands in dark, b in mid, b+1 in bright.
  CHECK(histogram3(gray_patch(85, 4), cfg) == HistogramTriple{16, 0, 0});
  CHECK(histogram3(gray_patch(86, 4), cfg) == HistogramTriple{0, 16, 0});
  CHECK(histogram3(gray_patch(170, 4), cfg) == HistogramTriple{0, 16, 0});
  CHECK(histogram3(gray_patch(171, 4), cfg) == HistogramTriple{0, 0, 16});

  SUBCASE("counts always sum to the pixel count") {
    std::mt19937 rng(17);
    for (int trial = 0; trial < 50; ++trial) {
      Raster img(224, 224);
      for (auto& v : img.pixels) v = static_cast<std::uint8_t>(rng());
      FilterConfig c;
      c.a = 1 + static_cast<int>(rng() % 200);
      c.b = c.a + 1 + static_cast<int>(rng() % (254 - c.a - 1));
      CHECK(histogram3(img, c).total() == 224 * 224);
    }
  }
}

TEST_CASE("filter config validation") {
  FilterConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.a = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.b = cfg.a;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.b = 255;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.bright_fraction_threshold = 1.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.literal_ratio_constant = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK(parse_filter_mode("paper-literal-ratio") == FilterMode::kLiteralRatio);
  CHECK(to_string(FilterMode::kBrightFraction) == "bright-fraction");
  CHECK_THROWS_AS(parse_filter_mode("otsu"), Error);
}

TEST_CASE("is_background, bright-fraction mode") {
  FilterConfig cfg;
  CHECK(is_background(gray_patch(255), cfg));
  CHECK_FALSE(is_background(gray_patch(100), cfg));

  // 90% white, 10% tissue: fraction 0.9 > 0.8
  PatchPixels mostly_white = gray_patch(255, 10);
  test::fill_rect(mostly_white.data, 0, 0, 10, 1, 100);
  CHECK(histogram3(mostly_white, cfg) == HistogramTriple{0, 10, 90});
  CHECK(is_background(mostly_white, cfg));

  // exactly at the threshold is kept: 80 bright of 100 is not > 0.8
  PatchPixels edge = gray_patch(255, 10);
  test::fill_rect(edge.data, 0, 0, 10, 2, 100);
  CHECK_FALSE(is_background(edge, cfg));

  SUBCASE("whitening a pixel keeps a background patch background") {
    std::mt19937 rng(23);
    for (int trial = 0; trial < 100; ++trial) {
      PatchPixels p = gray_patch(255, 32);
      const int tissue = static_cast<int>(rng() % 200);
      for (int i = 0; i < tissue; ++i) {
        auto* px = p.data.at(static_cast<int>(rng() % 32), static_cast<int>(rng() % 32));
        px[0] = px[1] = px[2] = static_cast<std::uint8_t>(rng() % 170);
      }
      if (!is_background(p, cfg)) continue;
      for (int step = 0; step < 20; ++step) {
        auto* px = p.data.at(static_cast<int>(rng() % 32), static_cast<int>(rng() % 32));
        px[0] = px[1] = px[2] = 255;
        CHECK(is_background(p, cfg));
      }
    }
  }
}

TEST_CASE("is_background, literal ratio mode") {
  FilterConfig cfg;
  cfg.mode = FilterMode::kLiteralRatio;
  cfg.literal_ratio_constant = 1.0;
  // bright / max(dark, 1): white gives 50176 / 1, black gives 0 / 50176.
  CHECK_FALSE(is_background(gray_patch(255), cfg));
  CHECK(is_background(gray_patch(0), cfg));
  CHECK(is_background(gray_patch(120), cfg));  // 0 / max(0, 1) = 0 < 1
  CHECK(is_background(HistogramTriple{10, 0, 5}, cfg));
  CHECK_FALSE(is_background(HistogramTriple{10, 0, 10}, cfg));
}

TEST_CASE("filter_patches") {
  test::TempDir dir;
  FilterConfig cfg;
  const auto mag = Magnification::parse("1x");

  SUBCASE("all white level") {
    auto slide = test::write_single_level_slide(dir.path(), "W", "A", test::uniform_raster(672, 448, 255, 255, 255));
    const auto r = filter_patches(slide, mag, cfg);
    CHECK(r.kept.empty());
    CHECK(r.dropped_count == 6);
  }

  SUBCASE("all mid gray level") {
    auto slide = test::write_single_level_slide(dir.path(), "G", "A", test::uniform_raster(672, 448, 128, 128, 128));
    const auto r = filter_patches(slide, mag, cfg);
    CHECK(r.kept.size() == 6);
    CHECK(r.dropped_count == 0);
    CHECK(r.kept == enumerate_patches(slide, mag));
  }

  SUBCASE("three tissue quadrants and one white") {
    Raster img(448, 448);
    std::mt19937 rng(1);
    for (int y = 0; y < 448; ++y) {
      for (int x = 0; x < 448; ++x) {
        auto* p = img.at(x, y);
        const bool white_quadrant = x >= 224 && y < 224;  // row 0, col 1
        if (white_quadrant) {
          p[0] = p[1] = p[2] = static_cast<std::uint8_t>(240 + rng() % 16);
        } else {
          p[0] = static_cast<std::uint8_t>(150 + rng() % 40);
          p[1] = static_cast<std::uint8_t>(80 + rng() % 40);
          p[2] = static_cast<std::uint8_t>(130 + rng() % 40);
        }
      }
    }
    auto slide = test::write_single_level_slide(dir.path(), "Q", "A", img);
    const auto r = filter_patches(slide, mag, cfg);
    REQUIRE(r.kept.size() == 3);
    CHECK(r.dropped_count == 1);
    CHECK(r.kept[0].row == 0);
    CHECK(r.kept[0].col == 0);
    CHECK(r.kept[1].row == 1);
    CHECK(r.kept[1].col == 0);
    CHECK(r.kept[2].col == 1);
  }

  SUBCASE("kept plus dropped partitions the grid") {
    std::mt19937 rng(77);
    for (int trial = 0; trial < 5; ++trial) {
      const int w = 224 + static_cast<int>(rng() % 700), h = 224 + static_cast<int>(rng() % 700);
      Raster img(w, h);
      for (int y = 0; y < h; y += 16) {
        for (int x = 0; x < w; x += 16) {
          const auto v = static_cast<std::uint8_t>(rng() % 2 ? 250 : 110);
          test::fill_rect(img, x, y, std::min(16, w - x), std::min(16, h - y), v);
        }
      }
      auto slide = test::write_single_level_slide(dir.path(), "R" + std::to_string(trial), "A", img);
      const auto r = filter_patches(slide, mag, cfg);
      CHECK(static_cast<std::int64_t>(r.kept.size()) + r.dropped_count == patch_count(h, w, 224));
    }
  }

  SUBCASE("missing level") {
    auto slide = test::write_single_level_slide(dir.path(), "M", "A", test::uniform_raster(224, 224, 1, 1, 1));
    CHECK_THROWS_AS(filter_patches(slide, Magnification::parse("5x"), cfg), Error);
  }
}
