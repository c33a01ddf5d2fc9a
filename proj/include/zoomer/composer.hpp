// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "zoomer/geometry.hpp"
#include "zoomer/raster.hpp"

namespace zoomer {

enum class ImageKind { SpatialComposite, ZoomedCrop, GlobalView, Original };

std::string_view to_string(ImageKind kind) noexcept;

// Source rectangle in the original image and where it landed in the output.
struct Placement {
  Box source;
  Box canvas;
};

struct ComposedImage {
  Raster pixels;
  std::vector<Placement> placements;
  double shrink_factor = 1.0;  // output pixels per source pixel
  ImageKind kind = ImageKind::SpatialComposite;

  int width() const noexcept { return pixels.width(); }
  int height() const noexcept { return pixels.height(); }
};

struct ComposeConfig {
  int tile_target = 512;
  Rgb fill = {255, 255, 255};
  bool crop_to_hull = true;
  double margin_fraction = 0.0;

  void validate() const;
};

// Blank canvas with every box's source pixels copied to the same coordinates,
// optionally cropped to the boxes' hull, before any resizing. Boxes are placed
// in the given order and a pixel is never written twice, so earlier boxes win
// overlaps (pass them in descending score order).
struct SpatialCanvas {
  Raster canvas;
  PixelRect window;                  // canvas extent in original coordinates
  std::vector<PixelRect> placed;     // integer source rects, original coordinates
};

SpatialCanvas compose_canvas(const Raster& image, std::span<const Box> boxes, const ComposeConfig& cfg);

// compose_canvas followed by an aspect-preserving resize to tile_target on the
// long side. Throws NoRegions on an empty box list.
ComposedImage compose_spatial(const Raster& image, std::span<const Box> boxes, const ComposeConfig& cfg);

// Crops the enclosing rectangle of `box` (plus margin) and resizes it up or
// down so its long side equals tile_target. Throws DegenerateBox.
ComposedImage crop_zoom(const Raster& image, const Box& box, const ComposeConfig& cfg);

// Whole image, shrunk so the long side is <= tile_target.
ComposedImage global_view(const Raster& image, const ComposeConfig& cfg);

// Draws box outlines and scores on a copy.
Raster draw_overlay(const Raster& image, std::span<const ScoredBox> boxes);
void render_overlay(const Raster& image, std::span<const ScoredBox> boxes,
                    const std::filesystem::path& out_path);

}  // namespace zoomer
