// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]

#include "stdnet/image.hpp"

#include <png.h>

#include <algorithm>
#include <cstring>

#include "stdnet/errors.hpp"
#include "stdnet/kernels.hpp"

namespace stdnet {

uint64_t Mask::count() const {
  uint64_t inter = 0, uni = 0;
  if (v.empty()) return 0;
  kernels::mask_counts(v.data(), v.data(), v.size(), &inter, &uni);
  return inter;
}

void mask_inter_union(const Mask& a, const Mask& b, uint64_t* inter,
                      uint64_t* uni) {
  if (a.h != b.h || a.w != b.w)
    throw InvalidInputError("mask_inter_union: dimension mismatch");
  if (a.v.empty()) {
    *inter = 0;
    *uni = 0;
    return;
  }
  kernels::mask_counts(a.v.data(), b.v.data(), a.v.size(), inter, uni);
}

PixelBox tight_box(const Mask& m) {
  int x0 = m.w, y0 = m.h, x1 = 0, y1 = 0;
  bool any = false;
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x)
      if (m.at(y, x)) {
        any = true;
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x + 1);
        y1 = std::max(y1, y + 1);
      }
  return any ? PixelBox{x0, y0, x1, y1} : PixelBox{};
}

Mask rasterize_box(const PixelBox& b, int img_h, int img_w) {
  Mask m(img_h, img_w);
  int x0 = std::max(0, b.x0), x1 = std::min(img_w, b.x1);
  int y0 = std::max(0, b.y0), y1 = std::min(img_h, b.y1);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.at(y, x) = 1;
  return m;
}

namespace {

// libpng simplified API; pixels in memory as RGB or GRAY rows.

void write_png_raw(const std::string& path, uint32_t format, int h, int w,
                   const uint8_t* pixels) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = png_uint_32(w);
  img.height = png_uint_32(h);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, pixels, 0, nullptr))
    throw FormatError("png write failed: " + path + " (" + img.message + ")");
}

}  // namespace

void write_png(const std::string& path, const Image& img) {
  if (img.h <= 0 || img.w <= 0)
    throw InvalidInputError("write_png: empty image");
  write_png_raw(path, PNG_FORMAT_RGB, img.h, img.w, img.rgb.data());
}

void write_png(const std::string& path, const Mask& mask) {
  if (mask.h <= 0 || mask.w <= 0)
    throw InvalidInputError("write_png: empty mask");
  std::vector<uint8_t> gray(mask.v.size());
  for (size_t i = 0; i < gray.size(); ++i) gray[i] = mask.v[i] ? 255 : 0;
  write_png_raw(path, PNG_FORMAT_GRAY, mask.h, mask.w, gray.data());
}

Image read_png_image(const std::string& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw FormatError("png read failed: " + path + " (" + img.message + ")");
  img.format = PNG_FORMAT_RGB;
  Image out(int(img.height), int(img.width));
  if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr))
    throw FormatError("png decode failed: " + path + " (" + img.message + ")");
  return out;
}

Mask read_png_mask(const std::string& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw FormatError("png read failed: " + path + " (" + img.message + ")");
  img.format = PNG_FORMAT_GRAY;
  std::vector<uint8_t> gray(size_t(img.height) * img.width);
  if (!png_image_finish_read(&img, nullptr, gray.data(), 0, nullptr))
    throw FormatError("png decode failed: " + path + " (" + img.message + ")");
  Mask out(int(img.height), int(img.width));
  for (size_t i = 0; i < gray.size(); ++i) out.v[i] = gray[i] ? 1 : 0;
  return out;
}

std::vector<uint8_t> encode_png(const Image& image) {
  if (image.h <= 0 || image.w <= 0)
    throw InvalidInputError("encode_png: empty image");
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = png_uint_32(image.w);
  img.height = png_uint_32(image.h);
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.rgb.data(), 0,
                                 nullptr))
    throw FormatError(std::string("png encode sizing failed: ") + img.message);
  std::vector<uint8_t> bytes(size);
  if (!png_image_write_to_memory(&img, bytes.data(), &size, 0,
                                 image.rgb.data(), 0, nullptr))
    throw FormatError(std::string("png encode failed: ") + img.message);
  bytes.resize(size);
  return bytes;
}

Image decode_png(const std::vector<uint8_t>& bytes) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw FormatError(std::string("png decode failed: ") + img.message);
  img.format = PNG_FORMAT_RGB;
  Image out(int(img.height), int(img.width));
  if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr))
    throw FormatError(std::string("png decode failed: ") + img.message);
  return out;
}

}  // namespace stdnet
