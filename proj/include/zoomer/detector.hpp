// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "zoomer/geometry.hpp"
#include "zoomer/raster.hpp"

namespace zoomer {

struct Detection {
  std::string phrase;
  Box box;  // in the frame of the submitted raster
  double score = 0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

// Where the submitted raster came from: `region` in original-image
// coordinates, and the submitted-pixels-per-original-pixel factor per axis.
// HTTP detectors never see this; the fixture detector replays annotations
// through it.
struct Provenance {
  Box region;
  double scale_x = 1.0;
  double scale_y = 1.0;
};

class Detector {
 public:
  virtual ~Detector() = default;

  // Detects `phrases` in the sub-image `view` of `image`. Returns only
  // detections with score >= t_conf, boxes relative to the view.
  virtual std::vector<Detection> detect(const Raster& image, const PixelRect& view,
                                        const Provenance& provenance,
                                        std::span<const std::string> phrases,
                                        double t_conf) const = 0;
};

struct FixtureAnnotation {
  std::string phrase;
  Box box;  // original-image coordinates
  double base_score = 0;
};

// Deterministic stand-in for a grounded detector: an annotation intersecting
// the submitted region comes back clipped, with its score scaled by the
// visible fraction of its area.
class FixtureDetector final : public Detector {
 public:
  explicit FixtureDetector(std::vector<FixtureAnnotation> annotations)
      : annotations_(std::move(annotations)) {}

  std::vector<Detection> detect(const Raster& image, const PixelRect& view,
                                const Provenance& provenance, std::span<const std::string> phrases,
                                double t_conf) const override;

  // Same rule without pixels; the submitted frame is implied by provenance.
  std::vector<Detection> replay(const Provenance& provenance, std::span<const std::string> phrases,
                                double t_conf) const;

  const std::vector<FixtureAnnotation>& annotations() const noexcept { return annotations_; }

 private:
  std::vector<FixtureAnnotation> annotations_;
};

// One JSON object per line: {"phrase": s, "box": [x0,y0,x1,y1], "score": n}.
std::vector<FixtureAnnotation> load_fixture(const std::filesystem::path& path);
void save_fixture(const std::vector<FixtureAnnotation>& annotations,
                  const std::filesystem::path& path);

// Client for the detector service: POST /detect, GET /health.
class HttpDetector final : public Detector {
 public:
  HttpDetector(std::string endpoint, std::chrono::milliseconds timeout, int retries);

  std::vector<Detection> detect(const Raster& image, const PixelRect& view,
                                const Provenance& provenance, std::span<const std::string> phrases,
                                double t_conf) const override;

  // Returns the model name reported by /health.
  std::string health() const;

 private:
  std::string post_with_retries(const std::string& path, const std::string& body) const;

  std::string host_;  // scheme://host[:port]
  std::string base_path_;
  std::chrono::milliseconds timeout_;
  int retries_;
};

// Wire bodies shared by the client, the fixture replay and tests.
std::string detect_request_body(const std::vector<std::uint8_t>& png, std::span<const std::string> phrases,
                                double threshold);
std::string detections_body(const std::vector<Detection>& detections);
std::vector<Detection> parse_detections_body(const std::string& body);

enum class DetectorKind { Http, Fixture };

struct DetectorBinding {
  DetectorKind kind = DetectorKind::Fixture;
  std::string endpoint;
  std::filesystem::path fixture_path;
  std::chrono::milliseconds timeout{30000};
  int retries = 2;
};

std::unique_ptr<Detector> make_detector(const DetectorBinding& binding);

// Single whole-raster call.
std::vector<Detection> detect(const Detector& detector, const Raster& image,
                              std::span<const std::string> phrases, double t_conf);

}  // namespace zoomer
