// SPDX-License-Identifier: Apache-2.0

#include "zoomer/detector.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <json.hpp>
#include <thread>

#include "zoomer/error.hpp"

namespace zoomer {

using nlohmann::json;

namespace {

bool same_phrase(std::string_view a, std::string_view b) {
  return std::equal(a.begin(), a.end(), b.begin(), b.end(), [](char x, char y) {
    return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
  });
}

Box box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw std::invalid_argument("box must be [x0,y0,x1,y1]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json box_to_json(const Box& b) { return json::array({b.x0, b.y0, b.x1, b.y1}); }

}  // namespace

std::vector<Detection> FixtureDetector::replay(const Provenance& provenance,
                                               std::span<const std::string> phrases,
                                               double t_conf) const {
  std::vector<Detection> out;
  const Box& region = provenance.region;
  for (const auto& phrase : phrases) {
    for (const auto& ann : annotations_) {
      if (!same_phrase(ann.phrase, phrase)) continue;
      const auto visible = clip(ann.box, region);
      if (!visible) continue;
      const double score = ann.base_score * (visible->area() / ann.box.area());
      if (score < t_conf) continue;
      const Box local{(visible->x0 - region.x0) * provenance.scale_x,
                      (visible->y0 - region.y0) * provenance.scale_y,
                      (visible->x1 - region.x0) * provenance.scale_x,
                      (visible->y1 - region.y0) * provenance.scale_y};
      out.push_back({phrase, local, score});
    }
  }
  return out;
}

std::vector<Detection> FixtureDetector::detect(const Raster& /*image*/, const PixelRect& /*view*/,
                                               const Provenance& provenance,
                                               std::span<const std::string> phrases,
                                               double t_conf) const {
  return replay(provenance, phrases, t_conf);
}

std::vector<FixtureAnnotation> load_fixture(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FixtureError, "cannot open fixture " + path.string());
  std::vector<FixtureAnnotation> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      FixtureAnnotation ann{j.at("phrase").get<std::string>(), box_from_json(j.at("box")),
                            j.at("score").get<double>()};
      if (!ann.box.valid() || ann.base_score < 0 || ann.base_score > 1) {
        throw std::invalid_argument("box or score out of range");
      }
      out.push_back(std::move(ann));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::FixtureError,
                  path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_fixture(const std::vector<FixtureAnnotation>& annotations,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& a : annotations) {
    json j = {{"phrase", a.phrase}, {"box", box_to_json(a.box)}, {"score", a.base_score}};
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------

std::string detect_request_body(const std::vector<std::uint8_t>& png,
                                std::span<const std::string> phrases, double threshold) {
  json j = {{"image", base64_encode(png)},
            {"phrases", std::vector<std::string>(phrases.begin(), phrases.end())},
            {"threshold", threshold}};
  return j.dump();
}

std::string detections_body(const std::vector<Detection>& detections) {
  json arr = json::array();
  for (const auto& d : detections) {
    arr.push_back({{"phrase", d.phrase}, {"box", box_to_json(d.box)}, {"score", d.score}});
  }
  return json{{"detections", arr}}.dump();
}

std::vector<Detection> parse_detections_body(const std::string& body) {
  try {
    const auto j = json::parse(body);
    std::vector<Detection> out;
    for (const auto& d : j.at("detections")) {
      out.push_back({d.at("phrase").get<std::string>(), box_from_json(d.at("box")),
                     d.at("score").get<double>()});
    }
    return out;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::DetectorProtocolError, std::string("malformed detections: ") + e.what());
  }
}

HttpDetector::HttpDetector(std::string endpoint, std::chrono::milliseconds timeout, int retries)
    : timeout_(timeout), retries_(std::max(0, retries)) {
  const auto scheme = endpoint.find("://");
  if (scheme == std::string::npos ||
      (endpoint.compare(0, scheme, "http") != 0 && endpoint.compare(0, scheme, "https") != 0)) {
    throw Error(ErrorCode::InvalidArgument, "detector endpoint must be an http(s) URL: " + endpoint);
  }
  const auto path = endpoint.find('/', scheme + 3);
  host_ = endpoint.substr(0, path);
  base_path_ = path == std::string::npos ? "" : endpoint.substr(path);
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
  if (host_.size() <= scheme + 3) throw Error(ErrorCode::InvalidArgument, "detector endpoint has no host");
}

std::string HttpDetector::post_with_retries(const std::string& path, const std::string& body) const {
  for (int attempt = 0;; ++attempt) {
    httplib::Client client(host_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    auto res = client.Post(base_path_ + path, body, "application/json");
    if (res) {
      if (res->status != 200) {
        throw Error(ErrorCode::DetectorProtocolError,
                    "detector returned HTTP " + std::to_string(res->status));
      }
      return res->body;
    }
    if (attempt >= retries_) {
      throw Error(ErrorCode::DetectorUnavailable,
                  host_ + ": " + httplib::to_string(res.error()) + " after " +
                      std::to_string(attempt + 1) + " attempts");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50) * (1 << attempt));
  }
}

std::vector<Detection> HttpDetector::detect(const Raster& image, const PixelRect& view,
                                            const Provenance& /*provenance*/,
                                            std::span<const std::string> phrases,
                                            double t_conf) const {
  const bool whole = view.x == 0 && view.y == 0 && view.width == image.width() &&
                     view.height == image.height();
  const auto png = whole ? encode_png(image) : encode_png(crop(image, view));
  const auto body = post_with_retries("/detect", detect_request_body(png, phrases, t_conf));
  auto detections = parse_detections_body(body);
  std::erase_if(detections, [&](const Detection& d) { return d.score < t_conf; });
  return detections;
}

std::string HttpDetector::health() const {
  for (int attempt = 0;; ++attempt) {
    httplib::Client client(host_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    auto res = client.Get(base_path_ + "/health");
    if (res) {
      if (res->status != 200) {
        throw Error(ErrorCode::DetectorProtocolError, "health returned HTTP " + std::to_string(res->status));
      }
      try {
        const auto j = json::parse(res->body);
        if (j.at("status").get<std::string>() != "ok") throw std::invalid_argument("status not ok");
        return j.at("model").get<std::string>();
      } catch (const std::exception& e) {
        throw Error(ErrorCode::DetectorProtocolError, std::string("malformed health body: ") + e.what());
      }
    }
    if (attempt >= retries_) {
      throw Error(ErrorCode::DetectorUnavailable, host_ + ": " + httplib::to_string(res.error()));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50) * (1 << attempt));
  }
}

std::unique_ptr<Detector> make_detector(const DetectorBinding& binding) {
  switch (binding.kind) {
    case DetectorKind::Fixture:
      return std::make_unique<FixtureDetector>(load_fixture(binding.fixture_path));
    case DetectorKind::Http:
      return std::make_unique<HttpDetector>(binding.endpoint, binding.timeout, binding.retries);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown detector kind");
}

std::vector<Detection> detect(const Detector& detector, const Raster& image,
                              std::span<const std::string> phrases, double t_conf) {
  if (image.empty()) throw Error(ErrorCode::InvalidArgument, "empty image");
  if (phrases.empty()) throw Error(ErrorCode::InvalidArgument, "no phrases");
  const PixelRect whole{0, 0, image.width(), image.height()};
  return detector.detect(image, whole, Provenance{image.bounds()}, phrases, t_conf);
}

}  // namespace zoomer
