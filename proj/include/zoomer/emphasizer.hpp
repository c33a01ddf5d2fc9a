// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "zoomer/detector.hpp"
#include "zoomer/geometry.hpp"
#include "zoomer/keyterms.hpp"
#include "zoomer/raster.hpp"

namespace zoomer {

enum class EmphasisMode { Default, MultiResolution, MultiScale };

std::string_view to_string(EmphasisMode mode) noexcept;
EmphasisMode parse_emphasis_mode(std::string_view text);

struct EmphasisConfig {
  EmphasisMode mode = EmphasisMode::MultiScale;
  int s_max = 3;
  bool include_whole_image = true;
  double t_conf = 0.8;
  // Long-side sizes for the multi-resolution mode; 0 stands for the original
  // size and may only appear last.
  std::vector<int> resolutions = {224, 336, 672, 0};
  int max_concurrent_detections = 4;

  void validate() const;
};

// s x s tiling; every column is floor(width/s) wide except the last, which
// absorbs the remainder (rows likewise). Throws ImageTooSmall.
std::vector<PatchRect> divide_into_patches(int width, int height, int s);

// Runs the detector on every patch of every scale in `scales`, one call per
// (scale, patch, term). Results are remapped to global coordinates and merged
// by ascending scale, row-major patch index, then descending score.
std::vector<ScoredBox> detect_at_scales(const Raster& image, const KeyTermSet& terms,
                                        const std::vector<int>& scales, double t_conf,
                                        int max_concurrent, const Detector& detector);

// Scales {1 if include_whole_image} + {2..s_max}.
std::vector<ScoredBox> multi_scale_detect(const Raster& image, const KeyTermSet& terms,
                                          const EmphasisConfig& config, const Detector& detector);

std::vector<ScoredBox> multi_resolution_detect(const Raster& image, const KeyTermSet& terms,
                                               const EmphasisConfig& config,
                                               const Detector& detector);

std::vector<ScoredBox> detect_default(const Raster& image, const KeyTermSet& terms,
                                      const EmphasisConfig& config, const Detector& detector);

// Dispatches on config.mode.
std::vector<ScoredBox> emphasize(const Raster& image, const KeyTermSet& terms,
                                 const EmphasisConfig& config, const Detector& detector);

}  // namespace zoomer
