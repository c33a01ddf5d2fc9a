// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace zoomer {

// Pixel rectangle, origin top-left, half-open [x0,x1) x [y0,y1).
// A plain value: intermediate results (e.g. before clipping) may be invalid,
// so validity is checked at the boundaries with valid() / require_valid().
struct Box {
  double x0 = 0;
  double y0 = 0;
  double x1 = 0;
  double y1 = 0;

  double width() const noexcept { return x1 - x0; }
  double height() const noexcept { return y1 - y0; }
  double area() const noexcept { return width() * height(); }
  double center_x() const noexcept { return 0.5 * (x0 + x1); }
  double center_y() const noexcept { return 0.5 * (y0 + y1); }

  // Finite, non-negative, strictly positive area.
  bool valid() const noexcept;
  bool contains(const Box& other) const noexcept;

  friend bool operator==(const Box&, const Box&) = default;
};

void require_valid(const Box& b, const char* what);

// Where a detection came from. scale == 1 is the whole-image pass; resolution
// is the long-side pixel size used by the multi-resolution mode (0 = native).
struct Origin {
  int scale = 1;
  int row = 0;
  int col = 0;
  int resolution = 0;

  bool whole_image() const noexcept { return scale == 1; }
  friend bool operator==(const Origin&, const Origin&) = default;
};

struct ScoredBox {
  Box box;
  double score = 0;
  std::string phrase;
  Origin origin;

  friend bool operator==(const ScoredBox&, const ScoredBox&) = default;
};

struct PatchRect {
  Box box;  // global coordinates
  int scale = 1;
  int row = 0;
  int col = 0;
};

double iou(const Box& a, const Box& b) noexcept;

// Greedy suppression in descending score order (ties: larger area first, then
// lexicographic x0,y0,x1,y1). A candidate is dropped when its IoU with any kept
// box is >= t_iou. Output is in keep order.
std::vector<ScoredBox> nms_filter(std::vector<ScoredBox> boxes, double t_iou);

// Total order used by nms_filter; exposed so callers can sort consistently.
bool score_order_before(const ScoredBox& a, const ScoredBox& b) noexcept;

// Translates a patch-local box into global coordinates. Throws
// LocalBoxOutOfPatch when the local box exceeds the patch extent.
Box to_global(const Box& local, const PatchRect& patch);

std::optional<Box> clip(const Box& b, const Box& bounds) noexcept;

// Exact area of the union (x-slab sweep over compressed coordinates).
double union_area(std::span<const Box> boxes);

// Smallest integer rectangle enclosing b, clipped to [0,width) x [0,height).
// Returns nullopt when nothing remains.
struct PixelRect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  bool empty() const noexcept { return width <= 0 || height <= 0; }
  Box to_box() const noexcept {
    return {double(x), double(y), double(x + width), double(y + height)};
  }
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

std::optional<PixelRect> enclosing_pixels(const Box& b, int width, int height) noexcept;

}  // namespace zoomer
