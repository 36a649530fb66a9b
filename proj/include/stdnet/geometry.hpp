// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#pragma once

#include <array>

namespace stdnet {

// Axis-aligned box in center-size form. Coordinates are unit-agnostic: the
// model works in [0,1] normalized frame coordinates, tests and the segmenter
// also use pixel units. Width/height must be strictly positive.
struct Box {
  double cx = 0, cy = 0, w = 0, h = 0;

  std::array<double, 4> corners() const {  // x0, y0, x1, y1
    return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
  }
  static Box from_corners(double x0, double y0, double x1, double y1);

  bool valid() const;
  // Intersect with [0,1]^2; throws if nothing is left inside the frame.
  Box clipped_to_unit() const;

  double area() const { return w * h; }
};

// Integer pixel rectangle, half-open [x0,x1) x [y0,y1).
struct PixelBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int w() const { return x1 - x0; }
  int h() const { return y1 - y0; }
  bool valid() const { return x1 > x0 && y1 > y0; }
  bool operator==(const PixelBox&) const = default;
};

// Normalized center-size box <-> pixel corners on an img_h x img_w grid.
// Corners round to nearest and clip to the frame; a box that leaves nothing
// inside maps to the zero-area PixelBox{}.
PixelBox box_to_pixels(const Box& b, int img_h, int img_w);
// Throws InvalidInputError on a zero-area input.
Box box_from_pixels(const PixelBox& pb, int img_h, int img_w);

double iou(const Box& a, const Box& b);
double giou(const Box& a, const Box& b);

// lambda_l1 * mean|pred-gt| over the 4 center-size coords
//   + lambda_giou * (1 - giou(pred, gt)).
double box_loss(const Box& pred, const Box& gt, double lambda_l1,
                double lambda_giou);

}  // namespace stdnet
