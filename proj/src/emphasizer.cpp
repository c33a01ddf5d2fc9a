// SPDX-License-Identifier: Apache-2.0

#include "zoomer/emphasizer.hpp"

#include <algorithm>

#include "zoomer/error.hpp"
#include "zoomer/parallel.hpp"

namespace zoomer {

std::string_view to_string(EmphasisMode mode) noexcept {
  switch (mode) {
    case EmphasisMode::Default: return "default";
    case EmphasisMode::MultiResolution: return "multi_resolution";
    case EmphasisMode::MultiScale: return "multi_scale";
  }
  return "multi_scale";
}

EmphasisMode parse_emphasis_mode(std::string_view text) {
  if (text == "default") return EmphasisMode::Default;
  if (text == "multi_resolution") return EmphasisMode::MultiResolution;
  if (text == "multi_scale") return EmphasisMode::MultiScale;
  throw Error(ErrorCode::InvalidArgument, "unknown emphasis mode: " + std::string(text));
}

void EmphasisConfig::validate() const {
  if (s_max < 2) throw Error(ErrorCode::InvalidArgument, "s_max must be >= 2");
  if (!(t_conf > 0.0 && t_conf <= 1.0)) throw Error(ErrorCode::InvalidArgument, "t_conf must lie in (0,1]");
  if (max_concurrent_detections < 1) {
    throw Error(ErrorCode::InvalidArgument, "max_concurrent_detections must be positive");
  }
  if (resolutions.empty()) throw Error(ErrorCode::InvalidArgument, "no resolutions configured");
  int previous = 0;
  for (std::size_t i = 0; i < resolutions.size(); ++i) {
    const int r = resolutions[i];
    if (r == 0 && i + 1 == resolutions.size()) break;
    if (r <= previous) {
      throw Error(ErrorCode::InvalidArgument, "resolutions must be positive and strictly increasing");
    }
    previous = r;
  }
}

std::vector<PatchRect> divide_into_patches(int width, int height, int s) {
  if (s < 1) throw Error(ErrorCode::InvalidArgument, "scale must be >= 1");
  if (width < s || height < s) {
    throw Error(ErrorCode::ImageTooSmall, std::to_string(width) + "x" + std::to_string(height) +
                                              " cannot be split " + std::to_string(s) + "x" +
                                              std::to_string(s));
  }
  const int cw = width / s;
  const int ch = height / s;
  std::vector<PatchRect> patches;
  patches.reserve(static_cast<std::size_t>(s) * s);
  for (int row = 0; row < s; ++row) {
    const int y0 = row * ch;
    const int y1 = row + 1 == s ? height : y0 + ch;
    for (int col = 0; col < s; ++col) {
      const int x0 = col * cw;
      const int x1 = col + 1 == s ? width : x0 + cw;
      patches.push_back({Box{double(x0), double(y0), double(x1), double(y1)}, s, row, col});
    }
  }
  return patches;
}

namespace {

// Local detection -> global ScoredBox, or nothing if it falls outside.
std::optional<ScoredBox> remap(const Detection& d, const PatchRect& patch, const Box& image_bounds,
                               double t_conf, Origin origin) {
  if (d.score < t_conf || d.score > 1.0) return std::nullopt;
  const Box extent{0, 0, patch.box.width(), patch.box.height()};
  const auto local = clip(d.box, extent);
  if (!local) return std::nullopt;
  const auto global = clip(to_global(*local, patch), image_bounds);
  if (!global) return std::nullopt;
  return ScoredBox{*global, d.score, d.phrase, origin};
}

void sort_group(std::vector<ScoredBox>& group) {
  std::stable_sort(group.begin(), group.end(), score_order_before);
}

}  // namespace

std::vector<ScoredBox> detect_at_scales(const Raster& image, const KeyTermSet& terms,
                                        const std::vector<int>& scales, double t_conf,
                                        int max_concurrent, const Detector& detector) {
  if (terms.terms.empty()) throw Error(ErrorCode::NoTermsFound, "no key terms to detect");
  if (image.empty()) throw Error(ErrorCode::InvalidArgument, "empty image");

  struct Task {
    PatchRect patch;
    std::size_t term;
  };
  std::vector<PatchRect> patches;
  for (int s : scales) {
    auto ps = divide_into_patches(image.width(), image.height(), s);
    patches.insert(patches.end(), ps.begin(), ps.end());
  }
  std::vector<Task> tasks;
  for (const auto& p : patches) {
    for (std::size_t t = 0; t < terms.terms.size(); ++t) tasks.push_back({p, t});
  }

  const Box bounds = image.bounds();
  std::vector<std::vector<ScoredBox>> results(tasks.size());
  parallel_for(tasks.size(), max_concurrent, [&](std::size_t i) {
    const auto& task = tasks[i];
    const auto& pb = task.patch.box;
    const PixelRect view{int(pb.x0), int(pb.y0), int(pb.width()), int(pb.height())};
    const std::string phrase[] = {terms.terms[task.term]};
    const auto detections = detector.detect(image, view, Provenance{pb}, phrase, t_conf);
    const Origin origin{task.patch.scale, task.patch.row, task.patch.col, 0};
    for (const auto& d : detections) {
      if (auto sb = remap(d, task.patch, bounds, t_conf, origin)) results[i].push_back(std::move(*sb));
    }
  });

  // Tasks are laid out scale-major, patch row-major, term-minor; merge each
  // patch's terms and order by descending score within the patch.
  std::vector<ScoredBox> merged;
  const std::size_t per_patch = terms.terms.size();
  for (std::size_t p = 0; p < patches.size(); ++p) {
    std::vector<ScoredBox> group;
    for (std::size_t t = 0; t < per_patch; ++t) {
      auto& r = results[p * per_patch + t];
      group.insert(group.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
    }
    sort_group(group);
    merged.insert(merged.end(), std::make_move_iterator(group.begin()),
                  std::make_move_iterator(group.end()));
  }
  return merged;
}

std::vector<ScoredBox> multi_scale_detect(const Raster& image, const KeyTermSet& terms,
                                          const EmphasisConfig& config, const Detector& detector) {
  config.validate();
  std::vector<int> scales;
  if (config.include_whole_image) scales.push_back(1);
  for (int s = 2; s <= config.s_max; ++s) scales.push_back(s);
  return detect_at_scales(image, terms, scales, config.t_conf, config.max_concurrent_detections,
                          detector);
}

std::vector<ScoredBox> detect_default(const Raster& image, const KeyTermSet& terms,
                                      const EmphasisConfig& config, const Detector& detector) {
  config.validate();
  return detect_at_scales(image, terms, {1}, config.t_conf, config.max_concurrent_detections,
                          detector);
}

std::vector<ScoredBox> multi_resolution_detect(const Raster& image, const KeyTermSet& terms,
                                               const EmphasisConfig& config,
                                               const Detector& detector) {
  config.validate();
  if (terms.terms.empty()) throw Error(ErrorCode::NoTermsFound, "no key terms to detect");
  if (image.empty()) throw Error(ErrorCode::InvalidArgument, "empty image");

  const int long_side = std::max(image.width(), image.height());
  const std::size_t n_res = config.resolutions.size();
  std::vector<Raster> scaled(n_res);
  for (std::size_t r = 0; r < n_res; ++r) {
    const int target = config.resolutions[r];
    if (target != 0 && target != long_side) {
      const auto [w, h] = fit_long_side(image.width(), image.height(), target);
      scaled[r] = resize(image, w, h);
    }
  }

  const std::size_t n_terms = terms.terms.size();
  const Box bounds = image.bounds();
  std::vector<std::vector<ScoredBox>> results(n_res * n_terms);
  parallel_for(results.size(), config.max_concurrent_detections, [&](std::size_t i) {
    const std::size_t r = i / n_terms;
    const std::size_t t = i % n_terms;
    const Raster& submitted = scaled[r].empty() ? image : scaled[r];
    const double sx = double(submitted.width()) / image.width();
    const double sy = double(submitted.height()) / image.height();
    const PixelRect view{0, 0, submitted.width(), submitted.height()};
    const std::string phrase[] = {terms.terms[t]};
    const auto detections =
        detector.detect(submitted, view, Provenance{bounds, sx, sy}, phrase, config.t_conf);
    const Box frame = submitted.bounds();
    for (const auto& d : detections) {
      if (d.score < config.t_conf || d.score > 1.0) continue;
      const auto local = clip(d.box, frame);
      if (!local) continue;
      const Box original{local->x0 / sx, local->y0 / sy, local->x1 / sx, local->y1 / sy};
      const auto global = clip(original, bounds);
      if (!global) continue;
      results[i].push_back({*global, d.score, d.phrase, Origin{1, 0, 0, config.resolutions[r]}});
    }
  });

  std::vector<ScoredBox> merged;
  for (std::size_t r = 0; r < n_res; ++r) {
    std::vector<ScoredBox> group;
    for (std::size_t t = 0; t < n_terms; ++t) {
      auto& v = results[r * n_terms + t];
      group.insert(group.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
    }
    sort_group(group);
    merged.insert(merged.end(), std::make_move_iterator(group.begin()),
                  std::make_move_iterator(group.end()));
  }
  return merged;
}

std::vector<ScoredBox> emphasize(const Raster& image, const KeyTermSet& terms,
                                 const EmphasisConfig& config, const Detector& detector) {
  switch (config.mode) {
    case EmphasisMode::Default: return detect_default(image, terms, config, detector);
    case EmphasisMode::MultiResolution: return multi_resolution_detect(image, terms, config, detector);
    case EmphasisMode::MultiScale: return multi_scale_detect(image, terms, config, detector);
  }
  return {};
}

}  // namespace zoomer
