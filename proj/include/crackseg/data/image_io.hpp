#pragma once

#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "crackseg/core/error.hpp"

namespace crackseg {

// 8-bit interleaved (HWC) raster.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t plane() const noexcept { return static_cast<std::size_t>(width) * height; }
  std::uint8_t& at(int y, int x, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  friend bool operator==(const Image&, const Image&) = default;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw DataError("cannot open " + path.string());
  return f;
}

// Decoded samples before channel conversion; 16-bit data keeps full depth.
struct RawRaster {
  int width = 0, height = 0, channels = 0, depth = 8;
  std::vector<std::uint16_t> samples;
};

inline RawRaster read_png_raw(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw DataError("not a PNG file: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng initialisation failed");
  }
  RawRaster r;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("corrupt PNG: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int bits = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && bits < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (bits == 16) png_set_swap(png);  // native little-endian 16-bit samples
  png_read_update_info(png, info);
  r.width = static_cast<int>(png_get_image_width(png, info));
  r.height = static_cast<int>(png_get_image_height(png, info));
  r.channels = png_get_channels(png, info);
  r.depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * r.height);
  rows.resize(r.height);
  for (int y = 0; y < r.height; ++y) rows[y] = buffer.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  const std::size_t count = static_cast<std::size_t>(r.width) * r.height * r.channels;
  r.samples.resize(count);
  if (r.depth == 16) {
    for (std::size_t i = 0; i < count; ++i)
      r.samples[i] = static_cast<std::uint16_t>(buffer[2 * i] | (buffer[2 * i + 1] << 8));
  } else {
    for (std::size_t i = 0; i < count; ++i) r.samples[i] = buffer[i];
  }
  return r;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

inline RawRaster read_jpeg_raw(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  RawRaster r;
  std::vector<std::uint8_t> buffer;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DataError("corrupt JPEG " + path.string() + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f.get());
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.num_components != 1) cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  r.width = static_cast<int>(cinfo.output_width);
  r.height = static_cast<int>(cinfo.output_height);
  r.channels = cinfo.output_components;
  const std::size_t stride = static_cast<std::size_t>(r.width) * r.channels;
  buffer.resize(stride * r.height);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = buffer.data() + stride * cinfo.output_scanline;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  r.samples.assign(buffer.begin(), buffer.end());
  return r;
}

inline bool has_png_signature(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  png_byte sig[8];
  return std::fread(sig, 1, 8, f.get()) == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

inline RawRaster read_raw(const std::filesystem::path& path) {
  return has_png_signature(path) ? read_png_raw(path) : read_jpeg_raw(path);
}

inline std::uint8_t to8(std::uint16_t v, int depth) {
  return depth == 16 ? static_cast<std::uint8_t>((v + 128) / 257) : static_cast<std::uint8_t>(v);
}

}  // namespace detail

// Cheap readability probe: the file opens and carries a PNG or JPEG
// signature.
inline bool probe_image(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "rb");
  if (!f) return false;
  unsigned char sig[8] = {};
  const std::size_t got = std::fread(sig, 1, 8, f);
  std::fclose(f);
  if (got == 8 && png_sig_cmp(sig, 0, 8) == 0) return true;
  return got >= 3 && sig[0] == 0xFF && sig[1] == 0xD8 && sig[2] == 0xFF;
}

// PNG or JPEG (detected by signature) as 3-channel RGB. Grey inputs are
// replicated; alpha is dropped.
inline Image read_rgb(const std::filesystem::path& path) {
  const auto raw = detail::read_raw(path);
  Image img(raw.width, raw.height, 3);
  const int c = raw.channels;
  for (std::size_t i = 0; i < img.plane(); ++i)
    for (int k = 0; k < 3; ++k) {
      const int src = c >= 3 ? k : 0;
      img.pixels[i * 3 + k] = detail::to8(raw.samples[i * c + src], raw.depth);
    }
  return img;
}

// Single-channel mask in {0, 1}: pixels at or above `threshold` (on the 8-bit
// scale; 16-bit files are rescaled first) are crack. Colour masks use their
// first channel.
inline Image read_mask(const std::filesystem::path& path, int threshold = 128) {
  const auto raw = detail::read_raw(path);
  Image m(raw.width, raw.height, 1);
  for (std::size_t i = 0; i < m.plane(); ++i)
    m.pixels[i] = detail::to8(raw.samples[i * raw.channels], raw.depth) >= threshold ? 1 : 0;
  return m;
}

namespace detail {

inline void write_png_rows(const std::filesystem::path& path, int width, int height, int color, int depth,
                           std::vector<png_byte>& data, std::size_t rowbytes) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng initialisation failed");
  }
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = data.data() + rowbytes * y;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("failed writing PNG " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, width, height, depth, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace detail

// 8-bit grey (1 channel) or RGB (3 channels).
inline void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw DataError("write_png: need 1 or 3 channels");
  std::vector<png_byte> data(img.pixels.begin(), img.pixels.end());
  detail::write_png_rows(path, img.width, img.height, img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                         8, data, static_cast<std::size_t>(img.width) * img.channels);
}

// 16-bit greyscale, big-endian on disk as PNG requires.
inline void write_png16(const std::filesystem::path& path, int width, int height,
                        const std::vector<std::uint16_t>& values) {
  if (values.size() != static_cast<std::size_t>(width) * height) throw DataError("write_png16: size mismatch");
  std::vector<png_byte> data(values.size() * 2);
  for (std::size_t i = 0; i < values.size(); ++i) {
    data[2 * i] = static_cast<png_byte>(values[i] >> 8);
    data[2 * i + 1] = static_cast<png_byte>(values[i] & 0xFF);
  }
  detail::write_png_rows(path, width, height, PNG_COLOR_TYPE_GRAY, 16, data, static_cast<std::size_t>(width) * 2);
}

}  // namespace crackseg
