// SPDX-License-Identifier: Apache-2.0

#include "zoomer/raster.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <jpeglib.h>

#include "zoomer/error.hpp"

namespace zoomer {

Raster::Raster(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw Error(ErrorCode::InvalidArgument, "negative raster size");
  data_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill[0];
    data_[i + 1] = fill[1];
    data_[i + 2] = fill[2];
  }
}

Raster crop(const Raster& image, const PixelRect& rect) {
  if (rect.empty() || rect.x < 0 || rect.y < 0 || rect.x + rect.width > image.width() ||
      rect.y + rect.height > image.height()) {
    throw Error(ErrorCode::InvalidArgument, "crop rectangle outside image");
  }
  Raster out(rect.width, rect.height);
  const std::size_t row_bytes = static_cast<std::size_t>(rect.width) * 3;
  for (int y = 0; y < rect.height; ++y) {
    std::memcpy(out.pixel(0, y), image.pixel(rect.x, rect.y + y), row_bytes);
  }
  return out;
}

namespace {

struct AxisWeights {
  std::vector<int> first;
  std::vector<int> count;
  std::vector<double> weights;  // out_len x stride
  int stride = 0;
};

AxisWeights axis_weights(int in_len, int out_len) {
  const double scale = double(in_len) / double(out_len);
  const double filter_scale = std::max(scale, 1.0);
  const double support = filter_scale;
  AxisWeights aw;
  aw.stride = static_cast<int>(std::ceil(support)) * 2 + 1;
  aw.first.resize(out_len);
  aw.count.resize(out_len);
  aw.weights.assign(static_cast<std::size_t>(out_len) * aw.stride, 0.0);
  for (int i = 0; i < out_len; ++i) {
    const double center = (i + 0.5) * scale;
    int lo = std::max(static_cast<int>(center - support + 0.5), 0);
    int hi = std::min(static_cast<int>(center + support + 0.5), in_len);
    if (hi - lo > aw.stride) hi = lo + aw.stride;
    double total = 0;
    double* w = &aw.weights[static_cast<std::size_t>(i) * aw.stride];
    for (int j = lo; j < hi; ++j) {
      const double t = std::abs((j + 0.5 - center) / filter_scale);
      const double v = t < 1.0 ? 1.0 - t : 0.0;
      w[j - lo] = v;
      total += v;
    }
    if (total > 0) {
      for (int j = 0; j < hi - lo; ++j) w[j] /= total;
    } else {
      // Degenerate window: nearest sample.
      lo = std::clamp(static_cast<int>(center), 0, in_len - 1);
      hi = lo + 1;
      w[0] = 1.0;
    }
    aw.first[i] = lo;
    aw.count[i] = hi - lo;
  }
  return aw;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

Raster resize(const Raster& image, int width, int height) {
  if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidArgument, "resize to empty size");
  if (image.empty()) throw Error(ErrorCode::InvalidArgument, "resize of empty raster");
  if (width == image.width() && height == image.height()) return image;

  const auto hw = axis_weights(image.width(), width);
  const auto vw = axis_weights(image.height(), height);

  // Horizontal pass into a float buffer: width x src_height.
  std::vector<float> tmp(static_cast<std::size_t>(width) * image.height() * 3);
  for (int y = 0; y < image.height(); ++y) {
    const std::uint8_t* row = image.pixel(0, y);
    float* out = &tmp[static_cast<std::size_t>(y) * width * 3];
    for (int x = 0; x < width; ++x) {
      const double* w = &hw.weights[static_cast<std::size_t>(x) * hw.stride];
      double r = 0, g = 0, b = 0;
      const std::uint8_t* p = row + static_cast<std::size_t>(hw.first[x]) * 3;
      for (int k = 0; k < hw.count[x]; ++k, p += 3) {
        r += w[k] * p[0];
        g += w[k] * p[1];
        b += w[k] * p[2];
      }
      out[x * 3] = static_cast<float>(r);
      out[x * 3 + 1] = static_cast<float>(g);
      out[x * 3 + 2] = static_cast<float>(b);
    }
  }

  Raster result(width, height);
  const std::size_t row_floats = static_cast<std::size_t>(width) * 3;
  std::vector<double> acc(row_floats);
  for (int y = 0; y < height; ++y) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const double* w = &vw.weights[static_cast<std::size_t>(y) * vw.stride];
    for (int k = 0; k < vw.count[y]; ++k) {
      const float* src = &tmp[static_cast<std::size_t>(vw.first[y] + k) * row_floats];
      const double wk = w[k];
      for (std::size_t i = 0; i < row_floats; ++i) acc[i] += wk * src[i];
    }
    std::uint8_t* dst = result.pixel(0, y);
    for (std::size_t i = 0; i < row_floats; ++i) dst[i] = to_byte(acc[i]);
  }
  return result;
}

std::pair<int, int> fit_long_side(int width, int height, int long_side) noexcept {
  if (width >= height) {
    const int h = std::max(1, static_cast<int>(std::lround(double(height) * long_side / width)));
    return {long_side, h};
  }
  const int w = std::max(1, static_cast<int>(std::lround(double(width) * long_side / height)));
  return {w, long_side};
}

// ---------------------------------------------------------------------------
// Codecs

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Raster decode_png(std::span<const std::uint8_t> bytes) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::ImageDecodeError, img.message);
  }
  img.format = PNG_FORMAT_RGB;
  Raster out(static_cast<int>(img.width), static_cast<int>(img.height));
  // Transparent pixels composite onto white.
  png_color background{255, 255, 255};
  if (!png_image_finish_read(&img, &background, out.bytes().data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error(ErrorCode::ImageDecodeError, img.message);
  }
  return out;
}

std::uint16_t read16(const std::uint8_t* p, bool little) {
  return little ? std::uint16_t(p[0] | (p[1] << 8)) : std::uint16_t((p[0] << 8) | p[1]);
}

std::uint32_t read32(const std::uint8_t* p, bool little) {
  return little ? std::uint32_t(p[0] | (p[1] << 8) | (p[2] << 16) | (std::uint32_t(p[3]) << 24))
                : std::uint32_t((std::uint32_t(p[0]) << 24) | (p[1] << 16) | (p[2] << 8) | p[3]);
}

int exif_orientation(const std::uint8_t* data, std::size_t len) {
  if (len < 14 || std::memcmp(data, "Exif\0\0", 6) != 0) return 1;
  const std::uint8_t* tiff = data + 6;
  const std::size_t tlen = len - 6;
  bool little;
  if (tiff[0] == 'I' && tiff[1] == 'I') {
    little = true;
  } else if (tiff[0] == 'M' && tiff[1] == 'M') {
    little = false;
  } else {
    return 1;
  }
  const std::uint32_t ifd = read32(tiff + 4, little);
  if (ifd + 2 > tlen) return 1;
  const std::uint16_t entries = read16(tiff + ifd, little);
  for (std::uint16_t i = 0; i < entries; ++i) {
    const std::size_t e = ifd + 2 + std::size_t(i) * 12;
    if (e + 12 > tlen) break;
    if (read16(tiff + e, little) == 0x0112) {
      const int v = read16(tiff + e + 8, little);
      return (v >= 1 && v <= 8) ? v : 1;
    }
  }
  return 1;
}

Raster apply_orientation(const Raster& in, int orientation) {
  if (orientation <= 1) return in;
  const bool swap = orientation >= 5;
  const int w = in.width();
  const int h = in.height();
  Raster out(swap ? h : w, swap ? w : h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int dx = x, dy = y;
      switch (orientation) {
        case 2: dx = w - 1 - x; break;
        case 3: dx = w - 1 - x; dy = h - 1 - y; break;
        case 4: dy = h - 1 - y; break;
        case 5: dx = y; dy = x; break;
        case 6: dx = h - 1 - y; dy = x; break;
        case 7: dx = h - 1 - y; dy = w - 1 - x; break;
        case 8: dx = y; dy = w - 1 - x; break;
        default: break;
      }
      out.set(dx, dy, in.at(x, y));
    }
  }
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, mgr->message);
  std::longjmp(mgr->jump, 1);
}

struct JpegPixels {
  int width = 0;
  int height = 0;
  int orientation = 1;
  std::vector<std::uint8_t> rgb;
};

// No C++ objects with nontrivial destructors are created between setjmp and a
// possible longjmp; `pixels` lives in the caller.
bool decode_jpeg_raw(std::span<const std::uint8_t> bytes, JpegPixels& pixels, JpegErrorManager& err) {
  jpeg_decompress_struct cinfo;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  err.base.output_message = [](j_common_ptr) {};
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_save_markers(&cinfo, JPEG_APP0 + 1, 0xFFFF);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  pixels.width = static_cast<int>(cinfo.output_width);
  pixels.height = static_cast<int>(cinfo.output_height);
  pixels.rgb.resize(static_cast<std::size_t>(pixels.width) * pixels.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = pixels.rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * pixels.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  for (auto* m = cinfo.marker_list; m != nullptr; m = m->next) {
    if (m->marker == JPEG_APP0 + 1) pixels.orientation = exif_orientation(m->data, m->data_length);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

Raster decode_jpeg(std::span<const std::uint8_t> bytes) {
  JpegPixels pixels;
  JpegErrorManager err{};
  if (!decode_jpeg_raw(bytes, pixels, err)) throw Error(ErrorCode::ImageDecodeError, err.message);
  Raster out(pixels.width, pixels.height);
  std::copy(pixels.rgb.begin(), pixels.rgb.end(), out.bytes().begin());
  return apply_orientation(out, pixels.orientation);
}

}  // namespace

Raster decode_image(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t kPng[] = {0x89, 'P', 'N', 'G'};
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kPng, 4) == 0) return decode_png(bytes);
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
    return decode_jpeg(bytes);
  }
  throw Error(ErrorCode::ImageDecodeError, "unsupported image format");
}

Raster load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_image(bytes);
}

namespace {

void append_png_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void flush_png(png_structp) {}

// zlib level 1 with the Sub filter; several times faster than the default
// settings on large photographs and noise.
bool encode_png_fast(const Raster& image, std::vector<std::uint8_t>& out, char (&message)[128]) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    std::snprintf(message, sizeof message, "libpng write error");
    png_destroy_write_struct(&png, info ? &info : nullptr);
    return false;
  }
  png_set_write_fn(png, &out, append_png_bytes, flush_png);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()), static_cast<png_uint_32>(image.height()), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 1);
  png_set_filter(png, 0, PNG_FILTER_SUB);
  png_write_info(png, info);
  for (int y = 0; y < image.height(); ++y) {
    png_write_row(png, const_cast<png_bytep>(image.pixel(0, y)));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Raster& image, PngSpeed speed) {
  if (image.empty()) throw Error(ErrorCode::InvalidArgument, "cannot encode empty raster");
  if (speed == PngSpeed::Fast) {
    std::vector<std::uint8_t> out;
    out.reserve(image.bytes().size() / 2);
    char message[128] = {};
    if (!encode_png_fast(image, out, message)) throw Error(ErrorCode::IoError, std::string("png encode failed: ") + message);
    return out;
  }
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width());
  img.height = static_cast<png_uint_32>(image.height());
  img.format = PNG_FORMAT_RGB;

  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(img, size, 0, image.bytes().data(), 0, nullptr)) {
    throw Error(ErrorCode::IoError, std::string("png size query failed: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.bytes().data(), 0, nullptr)) {
    throw Error(ErrorCode::IoError, std::string("png encode failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

void save_png(const Raster& image, const std::filesystem::path& path, PngSpeed speed) {
  const auto bytes = encode_png(image, speed);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw Error(ErrorCode::InvalidArgument, "base64 length not a multiple of 4");
  std::vector<std::uint8_t> out(3 * (text.size() / 4));
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw Error(ErrorCode::InvalidArgument, "invalid base64");
  std::size_t padding = 0;
  if (!text.empty() && text.back() == '=') ++padding;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

}  // namespace zoomer
