// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stdnet/geometry.hpp"

namespace stdnet {

// 8-bit RGB image, row-major.
struct Image {
  int h = 0, w = 0;
  std::vector<uint8_t> rgb;  // h*w*3

  Image() = default;
  Image(int h_, int w_) : h(h_), w(w_), rgb(size_t(h_) * w_ * 3, 0) {}
  uint8_t& at(int y, int x, int c) { return rgb[(size_t(y) * w + x) * 3 + c]; }
  uint8_t at(int y, int x, int c) const {
    return rgb[(size_t(y) * w + x) * 3 + c];
  }
  bool operator==(const Image& o) const {
    return h == o.h && w == o.w && rgb == o.rgb;
  }
};

// Binary mask, row-major, values 0/1.
struct Mask {
  int h = 0, w = 0;
  std::vector<uint8_t> v;

  Mask() = default;
  Mask(int h_, int w_) : h(h_), w(w_), v(size_t(h_) * w_, 0) {}
  uint8_t& at(int y, int x) { return v[size_t(y) * w + x]; }
  uint8_t at(int y, int x) const { return v[size_t(y) * w + x]; }
  uint64_t count() const;
  bool empty_mask() const { return count() == 0; }
  bool operator==(const Mask& o) const {
    return h == o.h && w == o.w && v == o.v;
  }
};

// Intersection/union pixel counts through the kernel dispatcher.
void mask_inter_union(const Mask& a, const Mask& b, uint64_t* inter,
                      uint64_t* uni);

// Tight bounding box of the set pixels; the zero-area PixelBox{} when empty.
PixelBox tight_box(const Mask& m);

// Filled box clipped to the frame.
Mask rasterize_box(const PixelBox& b, int img_h, int img_w);

// PNG I/O (RGB images, 8-bit grayscale masks stored as 0/255). Read errors
// throw FormatError naming the path.
void write_png(const std::string& path, const Image& img);
void write_png(const std::string& path, const Mask& mask);
Image read_png_image(const std::string& path);
Mask read_png_mask(const std::string& path);

// In-memory PNG encode/decode for the segmenter wire protocol.
std::vector<uint8_t> encode_png(const Image& img);
Image decode_png(const std::vector<uint8_t>& bytes);

}  // namespace stdnet
