// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "support.hpp"
#include "zoomer/composer.hpp"
#include "zoomer/error.hpp"

using namespace zoomer;
using oracle::Gen;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidArgument;
}

const ComposeConfig kDefault{};

}  // namespace

TEST(Spatial, WholeImageBoxIsAPlainResize) {
  Gen g(61);
  const Raster img = oracle::random_raster(g, 640, 400);
  const std::vector<Box> boxes{img.bounds()};
  const auto out = compose_spatial(img, boxes, kDefault);
  EXPECT_EQ(out.width(), 512);
  EXPECT_EQ(out.height(), 320);
  EXPECT_EQ(out.pixels, resize(img, 512, 320));
  EXPECT_EQ(out.pixels, global_view(img, kDefault).pixels);
  EXPECT_DOUBLE_EQ(out.shrink_factor, 0.8);
}

TEST(Spatial, NoRegions) {
  EXPECT_EQ(code_of([] { compose_spatial(Raster(10, 10), std::vector<Box>{}, kDefault); }), ErrorCode::NoRegions);
}

TEST(Spatial, SmallGlyphInLargeImage) {
  Gen g(62);
  Raster img(4096, 3072, {90, 90, 90});
  const Raster patch = oracle::random_raster(g, 48, 48);
  for (int y = 0; y < 48; ++y) {
    for (int x = 0; x < 48; ++x) img.set(1000 + x, 2000 + y, patch.at(x, y));
  }
  const std::vector<Box> boxes{{1000, 2000, 1048, 2048}};
  const auto sc = compose_canvas(img, boxes, kDefault);
  EXPECT_EQ(sc.canvas, patch);
  const auto out = compose_spatial(img, boxes, kDefault);
  EXPECT_EQ(out.width(), 512);
  EXPECT_EQ(out.height(), 512);
  EXPECT_EQ(out.pixels, resize(patch, 512, 512));
  EXPECT_NEAR(out.shrink_factor, 512.0 / 48.0, 1e-12);
  ASSERT_EQ(out.placements.size(), 1u);
  EXPECT_EQ(out.placements[0].source, boxes[0]);
  EXPECT_EQ(out.placements[0].canvas, (Box{0, 0, 512, 512}));
}

TEST(Spatial, FidelityBeforeResize) {
  Gen g(63);
  for (int i = 0; i < 40; ++i) {
    const int w = g.between(20, 300), h = g.between(20, 300);
    const Raster img = oracle::random_raster(g, w, h);
    std::vector<Box> boxes;
    for (int k = 0, n = g.between(1, 6); k < n; ++k) boxes.push_back(oracle::int_box(g, w, h, 60));
    ComposeConfig cfg;
    cfg.crop_to_hull = g.chance(0.5);
    cfg.fill = {std::uint8_t(g.next()), 7, 9};
    const auto sc = compose_canvas(img, boxes, cfg);
    for (int y = 0; y < sc.window.height; ++y) {
      for (int x = 0; x < sc.window.width; ++x) {
        const int ox = x + sc.window.x, oy = y + sc.window.y;
        bool inside = false;
        for (const auto& b : boxes) inside = inside || (ox >= b.x0 && ox < b.x1 && oy >= b.y0 && oy < b.y1);
        ASSERT_EQ(sc.canvas.at(x, y), inside ? img.at(ox, oy) : cfg.fill);
      }
    }
    if (!cfg.crop_to_hull) {
      EXPECT_EQ(sc.window, (PixelRect{0, 0, w, h}));
    }
  }
}

TEST(Spatial, OverlapsKeepTheFirstBox) {
  Raster img(20, 10);
  for (int x = 0; x < 20; ++x) {
    for (int y = 0; y < 10; ++y) img.set(x, y, {std::uint8_t(x), std::uint8_t(y), 0});
  }
  const std::vector<Box> boxes{{0, 0, 10, 10}, {5, 0, 15, 10}};
  const auto sc = compose_canvas(img, boxes, kDefault);
  EXPECT_EQ(sc.canvas, crop(img, {0, 0, 15, 10}));
}

TEST(Spatial, MarginExpandsTheHull) {
  const Raster img(200, 100);
  ComposeConfig cfg;
  cfg.margin_fraction = 0.1;
  const std::vector<Box> boxes{{50, 40, 70, 60}};
  const auto sc = compose_canvas(img, boxes, cfg);
  EXPECT_EQ(sc.window, (PixelRect{48, 38, 24, 24}));
  const std::vector<Box> edge{{0, 0, 20, 20}};
  EXPECT_EQ(compose_canvas(img, edge, cfg).window, (PixelRect{0, 0, 22, 22}));
}

TEST(Spatial, RegionsOutsideTheImageAreRejected) {
  const std::vector<Box> boxes{{0, 0, 30, 5}};
  EXPECT_THROW(compose_spatial(Raster(20, 10), boxes, kDefault), Error);
}

TEST(CropZoom, Examples) {
  Gen g(64);
  const Raster img = oracle::random_raster(g, 2100, 1100);

  const auto same = crop_zoom(img, {10, 10, 522, 266}, kDefault);
  EXPECT_EQ(same.width(), 512);
  EXPECT_EQ(same.height(), 256);
  EXPECT_DOUBLE_EQ(same.shrink_factor, 1.0);
  EXPECT_EQ(same.pixels, crop(img, {10, 10, 512, 256}));

  const auto up = crop_zoom(img, {100, 100, 200, 150}, kDefault);
  EXPECT_EQ(up.width(), 512);
  EXPECT_EQ(up.height(), 256);
  EXPECT_DOUBLE_EQ(up.shrink_factor, 5.12);
  EXPECT_EQ(up.kind, ImageKind::ZoomedCrop);

  const auto down = crop_zoom(img, {0, 0, 2048, 1024}, kDefault);
  EXPECT_EQ(down.width(), 512);
  EXPECT_EQ(down.height(), 256);
  EXPECT_DOUBLE_EQ(down.shrink_factor, 0.25);
}

TEST(CropZoom, Degenerate) {
  EXPECT_EQ(code_of([] { crop_zoom(Raster(10, 10), {3, 3, 3, 8}, kDefault); }), ErrorCode::DegenerateBox);
  EXPECT_EQ(code_of([] { crop_zoom(Raster(10, 10), {12, 12, 14, 14}, kDefault); }), ErrorCode::DegenerateBox);
}

TEST(CropZoom, WholeImageEqualsGlobalView) {
  Gen g(65);
  for (auto [w, h] : {std::pair{1024, 1024}, {700, 300}, {513, 999}}) {
    const Raster img = oracle::random_raster(g, w, h);
    const auto a = crop_zoom(img, img.bounds(), kDefault);
    const auto b = global_view(img, kDefault);
    EXPECT_EQ(a.pixels, b.pixels);
    EXPECT_EQ(a.shrink_factor, b.shrink_factor);
  }
}

TEST(GlobalView, Examples) {
  const auto big = global_view(Raster(4240, 2832), kDefault);
  EXPECT_EQ(big.width(), 512);
  EXPECT_EQ(big.height(), 342);
  EXPECT_EQ(big.kind, ImageKind::GlobalView);

  Gen g(66);
  const Raster small = oracle::random_raster(g, 300, 200);
  const auto same = global_view(small, kDefault);
  EXPECT_EQ(same.pixels, small);
  EXPECT_DOUBLE_EQ(same.shrink_factor, 1.0);

  const auto square = global_view(Raster(1024, 1024), kDefault);
  EXPECT_EQ(square.width(), 512);
  EXPECT_EQ(square.height(), 512);
  EXPECT_DOUBLE_EQ(square.shrink_factor, 0.5);
}

TEST(Compose, LongSideNeverExceedsTarget) {
  Gen g(67);
  for (int i = 0; i < 40; ++i) {
    const int w = g.between(10, 1500), h = g.between(10, 1500);
    const Raster img(w, h);
    ComposeConfig cfg;
    cfg.tile_target = g.between(16, 600);
    const std::vector<Box> boxes{oracle::int_box(g, w, h, 400)};
    for (const auto& out : {compose_spatial(img, boxes, cfg), crop_zoom(img, boxes[0], cfg), global_view(img, cfg)}) {
      EXPECT_LE(std::max(out.width(), out.height()), cfg.tile_target);
    }
  }
}

TEST(Config, ComposeValidation) {
  ComposeConfig c;
  c.tile_target = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.margin_fraction = 1.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Overlay, ZeroBoxesIsACopy) {
  Gen g(68);
  const Raster img = oracle::random_raster(g, 50, 40);
  EXPECT_EQ(draw_overlay(img, std::vector<ScoredBox>{}), img);
}

TEST(Overlay, OneBoxDrawsFourEdges) {
  const Raster img(60, 60, {0, 0, 0});
  const std::vector<ScoredBox> boxes{{{10, 20, 30, 40}, 0.87, "cat", {}}};
  const Raster out = draw_overlay(img, boxes);
  const Rgb red{255, 0, 0};
  for (int x = 10; x < 30; ++x) {
    EXPECT_EQ(out.at(x, 20), red);
    EXPECT_EQ(out.at(x, 39), red);
  }
  for (int y = 20; y < 40; ++y) {
    EXPECT_EQ(out.at(10, y), red);
    EXPECT_EQ(out.at(29, y), red);
  }
  for (int y = 21; y < 39; ++y) {
    for (int x = 11; x < 29; ++x) EXPECT_EQ(out.at(x, y), (Rgb{0, 0, 0}));
  }
  EXPECT_EQ(out.at(9, 30), (Rgb{0, 0, 0}));
  EXPECT_EQ(out.at(30, 30), (Rgb{0, 0, 0}));
  EXPECT_EQ(img.at(10, 20), (Rgb{0, 0, 0}));
}

TEST(Overlay, UnwritablePath) {
  EXPECT_EQ(code_of([] { render_overlay(Raster(4, 4), std::vector<ScoredBox>{}, "/nonexistent-dir/x.png"); }),
            ErrorCode::IoError);
}
