// SPDX-License-Identifier: Apache-2.0

#include "zoomer/budget.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <json.hpp>

#include "zoomer/error.hpp"

namespace zoomer {

std::string_view to_string(Detail detail) noexcept { return detail == Detail::Low ? "low" : "high"; }

Detail parse_detail(std::string_view text) {
  if (text == "high") return Detail::High;
  if (text == "low") return Detail::Low;
  throw Error(ErrorCode::InvalidArgument, "detail must be high or low: " + std::string(text));
}

void TokenCostModel::validate() const {
  if (tile_px <= 0 || tokens_per_tile <= 0 || base_tokens <= 0 || max_long_side <= 0 ||
      max_short_side <= 0 || low_detail_tokens <= 0 || per_image_overhead < 0) {
    throw Error(ErrorCode::InvalidArgument, "token cost model fields must be positive");
  }
}

PixelSize provider_view_size(int width, int height, const TokenCostModel& model, Detail detail) {
  if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidArgument, "image size must be positive");
  double w = width;
  double h = height;
  if (detail == Detail::Low) {
    const double long_side = std::max(w, h);
    if (long_side > model.tile_px) {
      const double s = model.tile_px / long_side;
      return {int(std::max(1L, std::lround(w * s))), int(std::max(1L, std::lround(h * s)))};
    }
    return {width, height};
  }
  if (std::max(w, h) > model.max_long_side) {
    const double s = model.max_long_side / std::max(w, h);
    w = std::max(1.0, double(std::lround(w * s)));
    h = std::max(1.0, double(std::lround(h * s)));
  }
  if (std::min(w, h) > model.max_short_side) {
    const double s = model.max_short_side / std::min(w, h);
    w = std::max(1.0, double(std::lround(w * s)));
    h = std::max(1.0, double(std::lround(h * s)));
  }
  return {int(w), int(h)};
}

int estimate_image_tokens(int width, int height, const TokenCostModel& model, Detail detail) {
  if (detail == Detail::Low) return model.low_detail_tokens + model.per_image_overhead;
  const auto size = provider_view_size(width, height, model, detail);
  const int tiles_x = (size.width + model.tile_px - 1) / model.tile_px;
  const int tiles_y = (size.height + model.tile_px - 1) / model.tile_px;
  return model.base_tokens + model.tokens_per_tile * tiles_x * tiles_y + model.per_image_overhead;
}

double coverage_fraction(std::span<const Box> boxes, int width, int height) {
  if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidArgument, "image size must be positive");
  return std::clamp(union_area(boxes) / (double(width) * double(height)), 0.0, 1.0);
}

std::string_view to_string(Strategy strategy) noexcept {
  switch (strategy) {
    case Strategy::Local: return "local";
    case Strategy::Adaptive: return "adaptive";
    case Strategy::Global: return "global";
    case Strategy::Patches: return "patches";
  }
  return "local";
}

Strategy parse_strategy(std::string_view text) {
  if (text == "local") return Strategy::Local;
  if (text == "adaptive") return Strategy::Adaptive;
  if (text == "global") return Strategy::Global;
  if (text == "patches") return Strategy::Patches;
  throw Error(ErrorCode::InvalidArgument, "unknown strategy: " + std::string(text));
}

void StrategyConfig::validate() const {
  if (b_total && *b_total <= 0) throw Error(ErrorCode::InvalidArgument, "budget must be positive");
  if (!(t_adaptive > 0.0 && t_adaptive <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "adaptive threshold must lie in (0,1]");
  }
  if (max_patches < 0) throw Error(ErrorCode::InvalidArgument, "max_patches must be >= 0");
}

namespace {

// Lazily built plan ingredients, shared across degradation steps.
class Ingredients {
 public:
  Ingredients(const Raster& image, std::vector<ScoredBox> regions, const ComposeConfig& cfg)
      : image_(image), regions_(std::move(regions)), cfg_(cfg) {}

  const ComposedImage& composite() {
    if (!composite_) {
      std::vector<Box> boxes;
      for (const auto& r : regions_) boxes.push_back(r.box);
      composite_ = compose_spatial(image_, boxes, cfg_);
    }
    return *composite_;
  }

  const ComposedImage& global() {
    if (!global_) global_ = global_view(image_, cfg_);
    return *global_;
  }

  const ComposedImage& crop(std::size_t i) {
    while (crops_.size() <= i) crops_.push_back(crop_zoom(image_, regions_[crops_.size()].box, cfg_));
    return crops_[i];
  }

 private:
  const Raster& image_;
  std::vector<ScoredBox> regions_;
  const ComposeConfig& cfg_;
  std::optional<ComposedImage> composite_;
  std::optional<ComposedImage> global_;
  std::deque<ComposedImage> crops_;  // stable references
};

int total_tokens(const std::vector<const ComposedImage*>& images, const TokenCostModel& model, Detail d) {
  int total = 0;
  for (const auto* img : images) total += estimate_image_tokens(img->width(), img->height(), model, d);
  return total;
}

StrategyPlan finish(std::string strategy, std::string requested, const std::vector<const ComposedImage*>& images,
                    Detail detail, const TokenCostModel& model, const StrategyConfig& cfg) {
  StrategyPlan plan;
  plan.strategy = std::move(strategy);
  plan.requested_strategy = std::move(requested);
  plan.detail = detail;
  plan.budget = cfg.b_total;
  for (const auto* img : images) {
    plan.images.push_back(*img);
    const int t = estimate_image_tokens(img->width(), img->height(), model, detail);
    plan.image_tokens.push_back(t);
    plan.estimated_tokens += t;
  }
  return plan;
}

[[noreturn]] void budget_too_small(int needed, int budget) {
  throw Error(ErrorCode::BudgetTooSmall, "cheapest plan needs " + std::to_string(needed) +
                                             " tokens, budget is " + std::to_string(budget));
}

}  // namespace

StrategyPlan plan_prompt(const Raster& image, std::span<const ScoredBox> regions,
                         const StrategyConfig& cfg, const ComposeConfig& compose_cfg,
                         const TokenCostModel& model) {
  cfg.validate();
  compose_cfg.validate();
  model.validate();
  if (image.empty()) throw Error(ErrorCode::InvalidArgument, "empty image");

  const std::string requested(to_string(cfg.strategy));
  const auto fits = [&](int tokens) { return !cfg.b_total || tokens <= *cfg.b_total; };

  if (regions.empty()) {
    const ComposedImage gv = global_view(image, compose_cfg);
    const std::vector<const ComposedImage*> images{&gv};
    Detail detail = cfg.detail;
    if (!fits(total_tokens(images, model, detail)) && detail == Detail::High && !cfg.strict) {
      detail = Detail::Low;
    }
    const int cost = total_tokens(images, model, detail);
    if (!fits(cost)) budget_too_small(cost, *cfg.b_total);
    auto plan = finish(requested, requested, images, detail, model, cfg);
    plan.fallback = true;
    return plan;
  }

  std::vector<ScoredBox> ordered(regions.begin(), regions.end());
  std::stable_sort(ordered.begin(), ordered.end(), score_order_before);
  std::vector<Box> boxes;
  for (const auto& r : ordered) boxes.push_back(r.box);
  const double coverage = coverage_fraction(boxes, image.width(), image.height());

  Ingredients parts(image, ordered, compose_cfg);
  const std::size_t max_crops = std::min<std::size_t>(ordered.size(), std::size_t(cfg.max_patches));

  auto images_for = [&](Strategy s, std::size_t crops) {
    std::vector<const ComposedImage*> images;
    switch (s) {
      case Strategy::Local:
        images.push_back(&parts.composite());
        break;
      case Strategy::Adaptive:
        images.push_back(&parts.composite());
        if (coverage < cfg.t_adaptive) images.push_back(&parts.global());
        break;
      case Strategy::Global:
        images.push_back(&parts.composite());
        images.push_back(&parts.global());
        break;
      case Strategy::Patches:
        for (std::size_t i = 0; i < crops; ++i) images.push_back(&parts.crop(i));
        images.push_back(&parts.global());
        break;
    }
    return images;
  };

  auto make = [&](Strategy s, std::size_t crops, Detail detail, int dropped) {
    auto plan = finish(std::string(to_string(s)), requested, images_for(s, crops), detail, model, cfg);
    plan.coverage = coverage;
    plan.dropped_regions = dropped;
    return plan;
  };

  // Patches: the crop count N is whatever the budget allows, greedily keeping
  // the highest-scoring regions.
  if (cfg.strategy == Strategy::Patches) {
    for (std::size_t n = max_crops + 1; n-- > 0;) {
      const int cost = total_tokens(images_for(Strategy::Patches, n), model, cfg.detail);
      if (fits(cost)) return make(Strategy::Patches, n, cfg.detail, int(max_crops - n));
    }
    if (cfg.strict) budget_too_small(total_tokens(images_for(Strategy::Patches, 0), model, cfg.detail), *cfg.b_total);
  } else {
    const int cost = total_tokens(images_for(cfg.strategy, 0), model, cfg.detail);
    if (fits(cost)) return make(cfg.strategy, 0, cfg.detail, 0);
    if (cfg.strict) budget_too_small(cost, *cfg.b_total);
  }

  static constexpr Strategy kLadder[] = {Strategy::Patches, Strategy::Global, Strategy::Adaptive,
                                         Strategy::Local};
  auto step = std::find(std::begin(kLadder), std::end(kLadder), cfg.strategy);
  for (++step; step != std::end(kLadder); ++step) {
    const int cost = total_tokens(images_for(*step, 0), model, cfg.detail);
    if (fits(cost)) return make(*step, 0, cfg.detail, 0);
  }
  if (cfg.detail == Detail::High) {
    const int cost = total_tokens(images_for(Strategy::Local, 0), model, Detail::Low);
    if (fits(cost)) return make(Strategy::Local, 0, Detail::Low, 0);
    budget_too_small(cost, *cfg.b_total);
  }
  budget_too_small(total_tokens(images_for(Strategy::Local, 0), model, cfg.detail), *cfg.b_total);
}

std::string_view to_string(Baseline baseline) noexcept {
  switch (baseline) {
    case Baseline::Raw: return "raw";
    case Baseline::Resize: return "resize";
    case Baseline::LowDetail: return "low_detail";
  }
  return "raw";
}

StrategyPlan baseline_plan(const Raster& image, Baseline baseline, const ComposeConfig& compose_cfg,
                           const TokenCostModel& model) {
  model.validate();
  if (image.empty()) throw Error(ErrorCode::InvalidArgument, "empty image");
  ComposedImage img;
  Detail detail = Detail::High;
  if (baseline == Baseline::Resize) {
    img = global_view(image, compose_cfg);
  } else {
    img.kind = ImageKind::Original;
    img.pixels = image;
    img.placements.push_back({image.bounds(), image.bounds()});
    if (baseline == Baseline::LowDetail) detail = Detail::Low;
  }
  StrategyConfig unlimited;
  const std::string tag(to_string(baseline));
  auto plan = finish(tag, tag, {&img}, detail, model, unlimited);
  plan.coverage = 1.0;
  return plan;
}

std::string plan_document(const StrategyPlan& plan, std::span<const std::string> files) {
  using nlohmann::json;
  json images = json::array();
  for (std::size_t i = 0; i < plan.images.size(); ++i) {
    const auto& img = plan.images[i];
    json placements = json::array();
    for (const auto& p : img.placements) {
      placements.push_back({{"source", {p.source.x0, p.source.y0, p.source.x1, p.source.y1}},
                            {"canvas", {p.canvas.x0, p.canvas.y0, p.canvas.x1, p.canvas.y1}}});
    }
    json entry = {{"index", i},
                  {"kind", to_string(img.kind)},
                  {"width", img.width()},
                  {"height", img.height()},
                  {"estimated_tokens", plan.image_tokens[i]},
                  {"shrink_factor", img.shrink_factor},
                  {"placements", placements}};
    if (i < files.size()) entry["file"] = files[i];
    images.push_back(std::move(entry));
  }
  json doc = {{"strategy", plan.strategy},
              {"requested_strategy", plan.requested_strategy},
              {"detail", to_string(plan.detail)},
              {"estimated_tokens", plan.estimated_tokens},
              {"budget", plan.budget ? json(*plan.budget) : json(nullptr)},
              {"coverage_fraction", plan.coverage},
              {"dropped_regions", plan.dropped_regions},
              {"fallback", plan.fallback},
              {"images", images}};
  return doc.dump(2) + "\n";
}

}  // namespace zoomer
