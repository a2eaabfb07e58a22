#include "cbfn/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace cbfn {

Image to_float(const ImageU8& img) {
  Image out = Image::make(img.h, img.w, img.c);
  for (int ch = 0; ch < img.c; ++ch) {
    for (int y = 0; y < img.h; ++y) {
      for (int x = 0; x < img.w; ++x) {
        out.at(ch, y, x) =
            static_cast<float>(img.pixels[(static_cast<std::size_t>(y) * img.w + x) * img.c + ch]) /
            255.0f;
      }
    }
  }
  return out;
}

ImageU8 to_u8(const Image& img) {
  ImageU8 out;
  out.h = img.h;
  out.w = img.w;
  out.c = img.c;
  out.pixels.resize(static_cast<std::size_t>(img.h) * img.w * img.c);
  for (int ch = 0; ch < img.c; ++ch) {
    for (int y = 0; y < img.h; ++y) {
      for (int x = 0; x < img.w; ++x) {
        float v = img.at(ch, y, x);
        v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        out.pixels[(static_cast<std::size_t>(y) * img.w + x) * img.c + ch] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  return out;
}

Tensor<float> image_to_tensor(const Image& img) {
  std::vector<float> data = img.data;
  return Tensor<float>::from_data(Shape{1, img.c, img.h, img.w}, std::move(data));
}

Image tensor_to_image(const Tensor<float>& t) {
  const Shape s = t.shape();
  Image img = Image::make(static_cast<int>(s.h), static_cast<int>(s.w),
                          static_cast<int>(s.c));
  std::copy(t.data(), t.data() + s.c * s.h * s.w, img.data.begin());
  return img;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

ImageU8 read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw IoError(path + " is not a PNG file");
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  std::vector<png_bytep> rows;
  ImageU8 out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed to decode " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_GRAY_ALPHA ||
      png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);

  out.w = static_cast<int>(png_get_image_width(png, info));
  out.h = static_cast<int>(png_get_image_height(png, info));
  out.c = static_cast<int>(png_get_channels(png, info));
  if (out.c != 1 && out.c != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path + ": unsupported channel count " + std::to_string(out.c));
  }
  out.pixels.resize(static_cast<std::size_t>(out.h) * out.w * out.c);
  rows.resize(static_cast<std::size_t>(out.h));
  for (int y = 0; y < out.h; ++y) {
    rows[static_cast<std::size_t>(y)] =
        out.pixels.data() + static_cast<std::size_t>(y) * out.w * out.c;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_png(const std::string& path, const ImageU8& img) {
  if (img.c != 1 && img.c != 3) {
    throw IoError("write_png: unsupported channel count " + std::to_string(img.c));
  }
  if (img.h < 1 || img.w < 1) throw IoError("write_png: empty image");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open " + path + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to encode " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.w),
               static_cast<png_uint_32>(img.h), 8,
               img.c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  rows.resize(static_cast<std::size_t>(img.h));
  for (int y = 0; y < img.h; ++y) {
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(
        img.pixels.data() + static_cast<std::size_t>(y) * img.w * img.c);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace cbfn
