// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zoomer/composer.hpp"
#include "zoomer/geometry.hpp"
#include "zoomer/raster.hpp"

namespace zoomer {

enum class Detail { High, Low };

std::string_view to_string(Detail detail) noexcept;
Detail parse_detail(std::string_view text);

// Tiled image pricing: the image is scaled to fit the long/short side caps and
// billed per 512x512 tile on top of a base charge.
struct TokenCostModel {
  int tile_px = 512;
  int tokens_per_tile = 170;
  int base_tokens = 85;
  int max_long_side = 2048;
  int max_short_side = 768;
  int per_image_overhead = 0;
  int low_detail_tokens = 85;

  void validate() const;
};

struct PixelSize {
  int width = 0;
  int height = 0;
  friend bool operator==(const PixelSize&, const PixelSize&) = default;
};

// The size the provider actually looks at. High detail applies the long-side
// then the short-side cap (each only when exceeded, rounded to the nearest
// pixel); low detail fits the image inside a single tile.
PixelSize provider_view_size(int width, int height, const TokenCostModel& model, Detail detail);

int estimate_image_tokens(int width, int height, const TokenCostModel& model, Detail detail);

// Union area of the boxes over the image area.
double coverage_fraction(std::span<const Box> boxes, int width, int height);

enum class Strategy { Local, Adaptive, Global, Patches };

std::string_view to_string(Strategy strategy) noexcept;
Strategy parse_strategy(std::string_view text);

struct StrategyConfig {
  Strategy strategy = Strategy::Local;
  std::optional<int> b_total;  // unlimited when empty
  double t_adaptive = 0.5;
  int max_patches = 8;
  Detail detail = Detail::High;
  // Errors with BudgetTooSmall instead of switching strategy or detail.
  bool strict = false;

  void validate() const;
};

struct StrategyPlan {
  std::string strategy;  // local/adaptive/global/patches, or a baseline tag
  std::string requested_strategy;
  std::vector<ComposedImage> images;
  std::vector<int> image_tokens;
  Detail detail = Detail::High;
  int estimated_tokens = 0;
  std::optional<int> budget;
  double coverage = 0.0;
  bool fallback = false;
  int dropped_regions = 0;
};

// Builds the prompt images for a strategy and enforces the budget:
//   patches drops its lowest-score crops until it fits; if even no crops do,
//   or for other strategies, it steps down global -> adaptive -> local and
//   finally retries local at low detail. Empty regions yield a global-view
//   fallback plan. Throws BudgetTooSmall when nothing fits.
StrategyPlan plan_prompt(const Raster& image, std::span<const ScoredBox> regions,
                         const StrategyConfig& cfg, const ComposeConfig& compose_cfg,
                         const TokenCostModel& model);

enum class Baseline { Raw, Resize, LowDetail };

std::string_view to_string(Baseline baseline) noexcept;

// Raw: the untouched image at high detail. Resize: one image shrunk to the
// tile target. LowDetail: the untouched image at low detail.
StrategyPlan baseline_plan(const Raster& image, Baseline baseline, const ComposeConfig& compose_cfg,
                           const TokenCostModel& model);

// Structured description of a plan; `files` (optional) names the image files
// written for it, in plan order.
std::string plan_document(const StrategyPlan& plan, std::span<const std::string> files = {});

}  // namespace zoomer
