// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <random>

#include "zoomer/error.hpp"
#include "zoomer/harness.hpp"

namespace zoomer {

namespace {

using Bitmap = std::array<std::array<bool, 5>, 5>;

constexpr int kNoiseCell = 128;

Bitmap from_rows(const char* const (&rows)[5]) {
  Bitmap b{};
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 5; ++c) b[r][c] = rows[r][c] == '#';
  }
  return b;
}

// Low-frequency value noise: random colours on a coarse lattice, bilinearly
// interpolated.
void paint_background(Raster& image, std::mt19937_64& rng) {
  const int gw = image.width() / kNoiseCell + 2;
  const int gh = image.height() / kNoiseCell + 2;
  std::vector<Rgb> lattice(std::size_t(gw) * gh);
  for (auto& c : lattice) {
    for (auto& v : c) v = static_cast<std::uint8_t>(70 + rng() % 130);
  }
  std::vector<float> row(std::size_t(image.width()) * 3);
  for (int y = 0; y < image.height(); ++y) {
    const int gy = y / kNoiseCell;
    const float fy = float(y % kNoiseCell) / kNoiseCell;
    for (int x = 0; x < image.width(); ++x) {
      const int gx = x / kNoiseCell;
      const float fx = float(x % kNoiseCell) / kNoiseCell;
      const auto& a = lattice[std::size_t(gy) * gw + gx];
      const auto& b = lattice[std::size_t(gy) * gw + gx + 1];
      const auto& c = lattice[std::size_t(gy + 1) * gw + gx];
      const auto& d = lattice[std::size_t(gy + 1) * gw + gx + 1];
      auto* p = image.pixel(x, y);
      for (int k = 0; k < 3; ++k) {
        const float top = a[k] + (b[k] - a[k]) * fx;
        const float bottom = c[k] + (d[k] - c[k]) * fx;
        p[k] = static_cast<std::uint8_t>(top + (bottom - top) * fy + 0.5f);
      }
    }
  }
}

std::string index_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d", index);
  return buf;
}

}  // namespace

const Bitmap& glyph_bitmap(char letter) {
  static const Bitmap a = from_rows({".###.", "#...#", "#####", "#...#", "#...#"});
  static const Bitmap b = from_rows({"####.", "#...#", "####.", "#...#", "####."});
  static const Bitmap c = from_rows({".####", "#....", "#....", "#....", ".####"});
  static const Bitmap d = from_rows({"####.", "#...#", "#...#", "#...#", "####."});
  switch (letter) {
    case 'A': return a;
    case 'B': return b;
    case 'C': return c;
    case 'D': return d;
    default: throw Error(ErrorCode::InvalidArgument, std::string("no glyph for ") + letter);
  }
}

SynthSample synth_sample(const SynthOptions& options, int index) {
  if (options.width <= 0 || options.height <= 0) throw Error(ErrorCode::InvalidArgument, "bad image size");
  if (options.glyph_px < 5 || options.glyph_px >= std::min(options.width, options.height)) {
    throw Error(ErrorCode::InvalidArgument, "glyph must be at least 5 px and smaller than the image");
  }
  std::mt19937_64 rng(options.seed ^ fnv1a("synth:" + std::to_string(index)));
  SynthSample s;
  s.image = Raster(options.width, options.height);
  paint_background(s.image, rng);

  const char letter = static_cast<char>('A' + rng() % 4);
  s.letter = std::string(1, letter);
  const int g = options.glyph_px;
  const int x0 = static_cast<int>(rng() % std::uint64_t(options.width - g + 1));
  const int y0 = static_cast<int>(rng() % std::uint64_t(options.height - g + 1));
  const Rgb ink{static_cast<std::uint8_t>(rng() % 90), static_cast<std::uint8_t>(rng() % 90),
                static_cast<std::uint8_t>(120 + rng() % 120)};
  const auto& bitmap = glyph_bitmap(letter);
  for (int y = 0; y < g; ++y) {
    for (int x = 0; x < g; ++x) {
      const bool on = bitmap[std::size_t(y * 5 / g)][std::size_t(x * 5 / g)];
      s.image.set(x0 + x, y0 + y, on ? ink : Rgb{255, 255, 255});
    }
  }
  s.glyph = Box{double(x0), double(y0), double(x0 + g), double(y0 + g)};
  return s;
}

std::filesystem::path synthesize(const SynthOptions& options, const std::filesystem::path& out_dir) {
  if (options.count < 0) throw Error(ErrorCode::InvalidArgument, "count must be >= 0");
  if (options.glyph_px < 5 || options.glyph_px >= std::min(options.width, options.height)) {
    throw Error(ErrorCode::InvalidArgument, "glyph must be at least 5 px and smaller than the image");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  std::filesystem::create_directories(out_dir / "fixtures", ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + out_dir.string() + ": " + ec.message());

  const auto dataset = out_dir / "dataset.jsonl";
  std::ofstream out(dataset, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + dataset.string());

  for (int i = 0; i < options.count; ++i) {
    const auto sample = synth_sample(options, i);
    const std::string name = index_name(i);
    const std::string image_rel = "images/" + name + ".png";
    const std::string fixture_rel = "fixtures/" + name + ".jsonl";
    save_png(sample.image, out_dir / image_rel, PngSpeed::Fast);
    save_fixture({{"letter", sample.glyph, options.base_score}}, out_dir / fixture_rel);

    const auto& b = sample.glyph;
    nlohmann::json options_json = nlohmann::json::array();
    for (const char* l : {"A", "B", "C", "D"}) options_json.push_back({{"letter", l}, {"text", l}});
    nlohmann::json record = {{"image", image_rel},
                             {"question", "Which letter is shown?"},
                             {"options", options_json},
                             {"answer", sample.letter},
                             {"fixture", fixture_rel},
                             {"mock", {{"box", {b.x0, b.y0, b.x1, b.y1}}, {"legible_px", options.legible_px}}}};
    out << record.dump() << "\n";
  }
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + dataset.string());
  return dataset;
}

}  // namespace zoomer
