#pragma once

#include <png.h>

#include <csetjmp>
#include <algorithm>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "error.hpp"
#include "hash.hpp"
#include "types.hpp"

namespace lf {

namespace detail {

struct PngBuffer {
  const std::string* data = nullptr;
  std::size_t pos = 0;
};

inline void png_read_from_buffer(png_structp png, png_bytep out, png_size_t n) {
  auto* buf = static_cast<PngBuffer*>(png_get_io_ptr(png));
  if (buf->pos + n > buf->data->size()) png_error(png, "truncated PNG stream");
  std::memcpy(out, buf->data->data() + buf->pos, n);
  buf->pos += n;
}

inline void png_write_to_string(png_structp png, png_bytep in, png_size_t n) {
  static_cast<std::string*>(png_get_io_ptr(png))->append(reinterpret_cast<const char*>(in), n);
}

inline void png_flush_noop(png_structp) {}

}  // namespace detail

/// Encode as 8-bit RGB PNG. `text` becomes tEXt chunks (e.g. tool version, config hash).
inline std::string encode_png(const Image& image, const std::map<std::string, std::string>& text = {}) {
  require_shape(image.height > 0 && image.width > 0, "encode_png: empty image");
  // Everything with a destructor lives outside the setjmp region.
  std::string out;
  std::vector<png_byte> row(static_cast<std::size_t>(image.width) * 3);
  std::vector<png_text> chunks;
  for (const auto& [key, value] : text) {
    png_text t{};
    t.compression = PNG_TEXT_COMPRESSION_NONE;
    t.key = const_cast<char*>(key.c_str());
    t.text = const_cast<char*>(value.c_str());
    t.text_length = value.size();
    chunks.push_back(t);
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error("png: cannot create write struct");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("png: encoding failed");
  }
  png_set_write_fn(png, &out, detail::png_write_to_string, detail::png_flush_noop);
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  if (!chunks.empty()) png_set_text(png, info, chunks.data(), static_cast<int>(chunks.size()));
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) row[static_cast<std::size_t>(x) * 3 + c] = quantize_channel(image.at(y, x, c));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

struct DecodedPng {
  Image image;
  std::map<std::string, std::string> text;
};

inline DecodedPng decode_png_with_text(const std::string& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0)
    throw Error("decode_png: not a PNG stream");
  DecodedPng result;
  std::vector<png_byte> row;
  detail::PngBuffer buf{&bytes, 0};
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error("png: cannot create read struct");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("decode_png: corrupt PNG stream");
  }
  png_set_read_fn(png, &buf, detail::png_read_from_buffer);
  png_read_info(png, info);
  const auto width = static_cast<int>(png_get_image_width(png, info));
  const auto height = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (png_get_bit_depth(png, info) < 8) png_set_packing(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  result.image = Image(height, width);
  row.resize(png_get_rowbytes(png, info));
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) result.image.at(y, x, c) = row[static_cast<std::size_t>(x) * 3 + c] / 255.0;
  }
  png_read_end(png, info);
  png_textp text = nullptr;
  int n = 0;
  png_get_text(png, info, &text, &n);
  for (int i = 0; i < n; ++i) result.text[text[i].key] = std::string(text[i].text, text[i].text_length);
  png_destroy_read_struct(&png, &info, nullptr);
  return result;
}

inline Image decode_png(const std::string& bytes) { return decode_png_with_text(bytes).image; }

inline void write_png(const std::filesystem::path& path, const Image& image,
                      const std::map<std::string, std::string>& text = {}) {
  write_file(path, encode_png(image, text));
}

inline Image read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

/// All *.png files directly inside `dir`, sorted by filename.
inline std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) throw Error("not a directory: " + dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png") out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<Image> read_png_dir(const std::filesystem::path& dir) {
  std::vector<Image> images;
  for (const auto& p : list_pngs(dir)) images.push_back(read_png(p));
  return images;
}

}  // namespace lf
