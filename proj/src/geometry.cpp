// SPDX-License-Identifier: Apache-2.0

#include "zoomer/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "zoomer/error.hpp"

namespace zoomer {

bool Box::valid() const noexcept {
  return std::isfinite(x0) && std::isfinite(y0) && std::isfinite(x1) && std::isfinite(y1) &&
         x0 >= 0 && y0 >= 0 && x1 > x0 && y1 > y0;
}

bool Box::contains(const Box& o) const noexcept {
  return o.x0 >= x0 && o.y0 >= y0 && o.x1 <= x1 && o.y1 <= y1;
}

void require_valid(const Box& b, const char* what) {
  if (!b.valid()) {
    throw Error(ErrorCode::InvalidBox,
                std::string(what) + " (" + std::to_string(b.x0) + "," + std::to_string(b.y0) + "," +
                    std::to_string(b.x1) + "," + std::to_string(b.y1) + ")");
  }
}

double iou(const Box& a, const Box& b) noexcept {
  const double iw = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double ih = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

bool score_order_before(const ScoredBox& a, const ScoredBox& b) noexcept {
  if (a.score != b.score) return a.score > b.score;
  const double aa = a.box.area();
  const double ba = b.box.area();
  if (aa != ba) return aa > ba;
  return std::tie(a.box.x0, a.box.y0, a.box.x1, a.box.y1) <
         std::tie(b.box.x0, b.box.y0, b.box.x1, b.box.y1);
}

std::vector<ScoredBox> nms_filter(std::vector<ScoredBox> boxes, double t_iou) {
  if (!(t_iou >= 0.0 && t_iou <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "IoU threshold must lie in [0,1]");
  }
  std::stable_sort(boxes.begin(), boxes.end(), score_order_before);

  std::vector<ScoredBox> kept;
  kept.reserve(boxes.size());
  for (auto& candidate : boxes) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const ScoredBox& k) {
      return iou(k.box, candidate.box) >= t_iou;
    });
    if (!suppressed) kept.push_back(std::move(candidate));
  }
  return kept;
}

Box to_global(const Box& local, const PatchRect& patch) {
  const double pw = patch.box.width();
  const double ph = patch.box.height();
  if (!(local.x0 >= 0 && local.y0 >= 0 && local.x1 <= pw && local.y1 <= ph)) {
    throw Error(ErrorCode::LocalBoxOutOfPatch, "local box exceeds patch extent");
  }
  return {local.x0 + patch.box.x0, local.y0 + patch.box.y0, local.x1 + patch.box.x0,
          local.y1 + patch.box.y0};
}

std::optional<Box> clip(const Box& b, const Box& bounds) noexcept {
  Box out{std::max(b.x0, bounds.x0), std::max(b.y0, bounds.y0), std::min(b.x1, bounds.x1),
          std::min(b.y1, bounds.y1)};
  if (!(out.x1 > out.x0 && out.y1 > out.y0)) return std::nullopt;
  return out;
}

double union_area(std::span<const Box> boxes) {
  std::vector<double> xs;
  xs.reserve(boxes.size() * 2);
  for (const auto& b : boxes) {
    if (b.x1 <= b.x0 || b.y1 <= b.y0) continue;
    xs.push_back(b.x0);
    xs.push_back(b.x1);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

  double total = 0;
  std::vector<std::pair<double, double>> spans;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    const double left = xs[i];
    const double right = xs[i + 1];
    spans.clear();
    for (const auto& b : boxes) {
      if (b.x1 <= b.x0 || b.y1 <= b.y0) continue;
      if (b.x0 <= left && b.x1 >= right) spans.emplace_back(b.y0, b.y1);
    }
    if (spans.empty()) continue;
    std::sort(spans.begin(), spans.end());
    double covered = 0;
    double lo = spans.front().first;
    double hi = spans.front().second;
    for (const auto& [s0, s1] : spans) {
      if (s0 > hi) {
        covered += hi - lo;
        lo = s0;
        hi = s1;
      } else {
        hi = std::max(hi, s1);
      }
    }
    covered += hi - lo;
    total += covered * (right - left);
  }
  return total;
}

std::optional<PixelRect> enclosing_pixels(const Box& b, int width, int height) noexcept {
  const double x0 = std::max(0.0, std::floor(b.x0));
  const double y0 = std::max(0.0, std::floor(b.y0));
  const double x1 = std::min(double(width), std::ceil(b.x1));
  const double y1 = std::min(double(height), std::ceil(b.y1));
  if (!(x1 > x0 && y1 > y0)) return std::nullopt;
  return PixelRect{int(x0), int(y0), int(x1 - x0), int(y1 - y0)};
}

}  // namespace zoomer
