// SPDX-License-Identifier: Apache-2.0
// Generators and independent reference implementations for the test suites.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "zoomer/geometry.hpp"
#include "zoomer/raster.hpp"

namespace zoomer::oracle {

// SplitMix64; portable and stable across standard libraries.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  // [0, n)
  std::uint64_t below(std::uint64_t n) { return next() % n; }
  // [lo, hi]
  int between(int lo, int hi) { return lo + static_cast<int>(below(std::uint64_t(hi - lo + 1))); }
  // [0, 1)
  double unit() { return double(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
  bool chance(double p) { return unit() < p; }

 private:
  std::uint64_t state_;
};

// Integer-cornered box inside [0,w) x [0,h) with sides in [1, max_side].
inline Box int_box(Gen& g, int w, int h, int max_side) {
  const int bw = g.between(1, std::min(max_side, w));
  const int bh = g.between(1, std::min(max_side, h));
  const int x = g.between(0, w - bw);
  const int y = g.between(0, h - bh);
  return {double(x), double(y), double(x + bw), double(y + bh)};
}

// Real-valued box inside [0,w) x [0,h).
inline Box real_box(Gen& g, double w, double h, double min_side = 0.5) {
  const double bw = g.uniform(min_side, w);
  const double bh = g.uniform(min_side, h);
  const double x = g.uniform(0, w - bw);
  const double y = g.uniform(0, h - bh);
  return {x, y, x + bw, y + bh};
}

inline Raster random_raster(Gen& g, int w, int h) {
  Raster r(w, h);
  for (auto& b : r.bytes()) b = static_cast<std::uint8_t>(g.next());
  return r;
}

// Area of an intersection or union by counting unit cells; integer boxes only.
inline long cell_count(const std::vector<Box>& boxes, bool intersection) {
  if (boxes.empty()) return 0;
  int w = 0, h = 0;
  for (const auto& b : boxes) {
    w = std::max(w, int(b.x1));
    h = std::max(h, int(b.y1));
  }
  long n = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int hits = 0;
      for (const auto& b : boxes) hits += (x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1);
      n += intersection ? hits == int(boxes.size()) : hits > 0;
    }
  }
  return n;
}

inline double raster_iou(const Box& a, const Box& b) {
  const long inter = cell_count({a, b}, true);
  const long uni = cell_count({a, b}, false);
  return uni ? double(inter) / double(uni) : 0.0;
}

// IoU written independently of the library.
inline double ref_iou(const Box& a, const Box& b) {
  const long double iw = std::max<long double>(0, std::min<long double>(a.x1, b.x1) - std::max<long double>(a.x0, b.x0));
  const long double ih = std::max<long double>(0, std::min<long double>(a.y1, b.y1) - std::max<long double>(a.y0, b.y0));
  const long double inter = iw * ih;
  const long double ua = (long double)(a.x1 - a.x0) * (a.y1 - a.y0);
  const long double ub = (long double)(b.x1 - b.x0) * (b.y1 - b.y0);
  const long double uni = ua + ub - inter;
  return uni > 0 ? double(inter / uni) : 0.0;
}

// True when a outranks b: higher score, then larger area, then smaller
// (x0, y0, x1, y1).
inline bool ref_outranks(const ScoredBox& a, const ScoredBox& b) {
  if (a.score != b.score) return a.score > b.score;
  const double aa = (a.box.x1 - a.box.x0) * (a.box.y1 - a.box.y0);
  const double ba = (b.box.x1 - b.box.x0) * (b.box.y1 - b.box.y0);
  if (aa != ba) return aa > ba;
  if (a.box.x0 != b.box.x0) return a.box.x0 < b.box.x0;
  if (a.box.y0 != b.box.y0) return a.box.y0 < b.box.y0;
  if (a.box.x1 != b.box.x1) return a.box.x1 < b.box.x1;
  return a.box.y1 < b.box.y1;
}

// O(n^2) greedy reference: repeatedly take the best remaining box and strike
// everything overlapping it by >= t.
inline std::vector<ScoredBox> ref_nms(std::vector<ScoredBox> boxes, double t) {
  std::vector<ScoredBox> kept;
  std::vector<bool> gone(boxes.size(), false);
  for (;;) {
    std::size_t best = boxes.size();
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (!gone[i] && (best == boxes.size() || ref_outranks(boxes[i], boxes[best]))) best = i;
    }
    if (best == boxes.size()) return kept;
    gone[best] = true;
    kept.push_back(boxes[best]);
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (!gone[i] && ref_iou(boxes[best].box, boxes[i].box) >= t) gone[i] = true;
    }
  }
}

// Tokens for a w x h image at high detail, written from the pricing rule.
inline int ref_tokens(int w, int h, int overhead = 0) {
  double fw = w, fh = h;
  if (std::max(fw, fh) > 2048) {
    const double s = 2048.0 / std::max(fw, fh);
    fw = std::max(1.0, std::round(fw * s));
    fh = std::max(1.0, std::round(fh * s));
  }
  if (std::min(fw, fh) > 768) {
    const double s = 768.0 / std::min(fw, fh);
    fw = std::max(1.0, std::round(fw * s));
    fh = std::max(1.0, std::round(fh * s));
  }
  const int tiles = int(std::ceil(fw / 512)) * int(std::ceil(fh / 512));
  return 85 + 170 * tiles + overhead;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("zoomer-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace zoomer::oracle
