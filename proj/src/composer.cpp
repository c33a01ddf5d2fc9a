// SPDX-License-Identifier: Apache-2.0

#include "zoomer/composer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "zoomer/error.hpp"

namespace zoomer {

std::string_view to_string(ImageKind kind) noexcept {
  switch (kind) {
    case ImageKind::SpatialComposite: return "spatial_composite";
    case ImageKind::ZoomedCrop: return "zoomed_crop";
    case ImageKind::GlobalView: return "global_view";
    case ImageKind::Original: return "original";
  }
  return "original";
}

void ComposeConfig::validate() const {
  if (tile_target <= 0) throw Error(ErrorCode::InvalidArgument, "tile_target must be positive");
  if (!(margin_fraction >= 0.0 && margin_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "margin_fraction must lie in [0,1)");
  }
}

namespace {

constexpr double kBoundsTolerance = 1e-9;

void require_inside(const Box& b, const Raster& image) {
  require_valid(b, "region");
  if (b.x1 > image.width() + kBoundsTolerance || b.y1 > image.height() + kBoundsTolerance) {
    throw Error(ErrorCode::InvalidArgument, "region lies outside the image");
  }
}

PixelRect expand(const PixelRect& r, double margin, int width, int height) {
  const int mx = static_cast<int>(std::ceil(margin * r.width));
  const int my = static_cast<int>(std::ceil(margin * r.height));
  const int x0 = std::max(0, r.x - mx);
  const int y0 = std::max(0, r.y - my);
  const int x1 = std::min(width, r.x + r.width + mx);
  const int y1 = std::min(height, r.y + r.height + my);
  return {x0, y0, x1 - x0, y1 - y0};
}

ComposedImage fit_to_target(Raster source, int target, ImageKind kind, const Box& source_box) {
  const int long_side = std::max(source.width(), source.height());
  const auto [w, h] = fit_long_side(source.width(), source.height(), target);
  ComposedImage out;
  out.kind = kind;
  out.shrink_factor = double(target) / long_side;
  out.pixels = resize(source, w, h);
  out.placements.push_back({source_box, Box{0, 0, double(w), double(h)}});
  return out;
}

}  // namespace

SpatialCanvas compose_canvas(const Raster& image, std::span<const Box> boxes, const ComposeConfig& cfg) {
  cfg.validate();
  if (boxes.empty()) throw Error(ErrorCode::NoRegions, "no regions to compose");

  SpatialCanvas sc;
  for (const auto& b : boxes) {
    require_inside(b, image);
    const auto rect = enclosing_pixels(b, image.width(), image.height());
    if (!rect) throw Error(ErrorCode::DegenerateBox, "region covers no pixels");
    sc.placed.push_back(*rect);
  }

  if (cfg.crop_to_hull) {
    int x0 = image.width(), y0 = image.height(), x1 = 0, y1 = 0;
    for (const auto& r : sc.placed) {
      x0 = std::min(x0, r.x);
      y0 = std::min(y0, r.y);
      x1 = std::max(x1, r.x + r.width);
      y1 = std::max(y1, r.y + r.height);
    }
    sc.window = expand({x0, y0, x1 - x0, y1 - y0}, cfg.margin_fraction, image.width(), image.height());
  } else {
    sc.window = {0, 0, image.width(), image.height()};
  }

  const auto& win = sc.window;
  sc.canvas = Raster(win.width, win.height, cfg.fill);
  std::vector<std::uint8_t> written(static_cast<std::size_t>(win.width) * win.height, 0);
  for (const auto& r : sc.placed) {
    for (int y = r.y; y < r.y + r.height; ++y) {
      const int cy = y - win.y;
      std::uint8_t* mask = &written[static_cast<std::size_t>(cy) * win.width];
      for (int x = r.x; x < r.x + r.width; ++x) {
        const int cx = x - win.x;
        if (mask[cx]) continue;
        mask[cx] = 1;
        std::memcpy(sc.canvas.pixel(cx, cy), image.pixel(x, y), 3);
      }
    }
  }
  return sc;
}

ComposedImage compose_spatial(const Raster& image, std::span<const Box> boxes, const ComposeConfig& cfg) {
  auto sc = compose_canvas(image, boxes, cfg);
  const auto& win = sc.window;
  const auto [w, h] = fit_long_side(win.width, win.height, cfg.tile_target);

  ComposedImage out;
  out.kind = ImageKind::SpatialComposite;
  out.shrink_factor = double(cfg.tile_target) / std::max(win.width, win.height);
  out.pixels = resize(sc.canvas, w, h);
  const double sx = double(w) / win.width;
  const double sy = double(h) / win.height;
  for (const auto& r : sc.placed) {
    const Box canvas{(r.x - win.x) * sx, (r.y - win.y) * sy, (r.x + r.width - win.x) * sx,
                     (r.y + r.height - win.y) * sy};
    out.placements.push_back({r.to_box(), canvas});
  }
  return out;
}

ComposedImage crop_zoom(const Raster& image, const Box& box, const ComposeConfig& cfg) {
  cfg.validate();
  if (!(box.x1 > box.x0 && box.y1 > box.y0)) throw Error(ErrorCode::DegenerateBox, "empty box");
  const auto rect = enclosing_pixels(box, image.width(), image.height());
  if (!rect) throw Error(ErrorCode::DegenerateBox, "box covers no pixels");
  const auto window = expand(*rect, cfg.margin_fraction, image.width(), image.height());
  return fit_to_target(crop(image, window), cfg.tile_target, ImageKind::ZoomedCrop, window.to_box());
}

ComposedImage global_view(const Raster& image, const ComposeConfig& cfg) {
  cfg.validate();
  if (image.empty()) throw Error(ErrorCode::InvalidArgument, "empty image");
  if (std::max(image.width(), image.height()) <= cfg.tile_target) {
    ComposedImage out;
    out.kind = ImageKind::GlobalView;
    out.pixels = image;
    out.placements.push_back({image.bounds(), image.bounds()});
    return out;
  }
  return fit_to_target(image, cfg.tile_target, ImageKind::GlobalView, image.bounds());
}

// ---------------------------------------------------------------------------
// Debug overlay

namespace {

constexpr Rgb kOutline = {255, 0, 0};
constexpr Rgb kLabel = {255, 255, 0};

// 3x5 glyphs, one row per entry, bit 2 = leftmost column.
constexpr std::uint8_t kDigits[11][5] = {
    {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
    {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7},
    {0, 0, 0, 0, 2},  // '.'
};

void draw_text(Raster& img, int x, int y, const char* text) {
  for (const char* c = text; *c; ++c, x += 4) {
    const int g = (*c == '.') ? 10 : (*c >= '0' && *c <= '9') ? *c - '0' : -1;
    if (g < 0) continue;
    for (int row = 0; row < 5; ++row) {
      for (int col = 0; col < 3; ++col) {
        if (!(kDigits[g][row] & (4 >> col))) continue;
        const int px = x + col;
        const int py = y + row;
        if (px >= 0 && py >= 0 && px < img.width() && py < img.height()) img.set(px, py, kLabel);
      }
    }
  }
}

}  // namespace

Raster draw_overlay(const Raster& image, std::span<const ScoredBox> boxes) {
  Raster out = image;
  for (const auto& sb : boxes) {
    const auto r = enclosing_pixels(sb.box, image.width(), image.height());
    if (!r) continue;
    const int x1 = r->x + r->width - 1;
    const int y1 = r->y + r->height - 1;
    for (int x = r->x; x <= x1; ++x) {
      out.set(x, r->y, kOutline);
      out.set(x, y1, kOutline);
    }
    for (int y = r->y; y <= y1; ++y) {
      out.set(r->x, y, kOutline);
      out.set(x1, y, kOutline);
    }
    char label[16];
    std::snprintf(label, sizeof(label), "%.2f", sb.score);
    if (r->y >= 7) {
      draw_text(out, r->x, r->y - 6, label);
    } else if (y1 + 7 < image.height()) {
      draw_text(out, r->x, y1 + 2, label);
    }
  }
  return out;
}

void render_overlay(const Raster& image, std::span<const ScoredBox> boxes,
                    const std::filesystem::path& out_path) {
  save_png(draw_overlay(image, boxes), out_path);
}

}  // namespace zoomer
