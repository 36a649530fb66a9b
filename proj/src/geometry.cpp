// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]

#include "stdnet/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "stdnet/errors.hpp"

namespace stdnet {

namespace {

void check(const Box& b, const char* who) {
  if (!b.valid())
    throw InvalidInputError(std::string(who) + ": degenerate box (w=" +
                            std::to_string(b.w) + ", h=" + std::to_string(b.h) +
                            ")");
}

}  // namespace

bool Box::valid() const {
  return std::isfinite(cx) && std::isfinite(cy) && std::isfinite(w) &&
         std::isfinite(h) && w > 0 && h > 0;
}

Box Box::from_corners(double x0, double y0, double x1, double y1) {
  if (!(x1 > x0 && y1 > y0))
    throw InvalidInputError("from_corners: need x0 < x1 and y0 < y1");
  return Box{(x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0};
}

Box Box::clipped_to_unit() const {
  auto [x0, y0, x1, y1] = corners();
  x0 = std::clamp(x0, 0.0, 1.0);
  y0 = std::clamp(y0, 0.0, 1.0);
  x1 = std::clamp(x1, 0.0, 1.0);
  y1 = std::clamp(y1, 0.0, 1.0);
  if (!(x1 > x0 && y1 > y0))
    throw InvalidInputError("clipped_to_unit: box lies outside the frame");
  return from_corners(x0, y0, x1, y1);
}

double iou(const Box& a, const Box& b) {
  check(a, "iou");
  check(b, "iou");
  auto [ax0, ay0, ax1, ay1] = a.corners();
  auto [bx0, by0, bx1, by1] = b.corners();
  double iw = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
  double ih = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
  double inter = iw * ih;
  double uni = a.area() + b.area() - inter;
  return inter / uni;
}

double giou(const Box& a, const Box& b) {
  check(a, "giou");
  check(b, "giou");
  auto [ax0, ay0, ax1, ay1] = a.corners();
  auto [bx0, by0, bx1, by1] = b.corners();
  double iw = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
  double ih = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
  double inter = iw * ih;
  double uni = a.area() + b.area() - inter;
  double ew = std::max(ax1, bx1) - std::min(ax0, bx0);
  double eh = std::max(ay1, by1) - std::min(ay0, by0);
  double enc = ew * eh;
  return inter / uni - (enc - uni) / enc;
}

PixelBox box_to_pixels(const Box& b, int img_h, int img_w) {
  if (!b.valid()) throw InvalidInputError("box_to_pixels: invalid box");
  auto [x0, y0, x1, y1] = b.corners();
  auto px = [](double v, int n) {
    return int(std::clamp<long long>(std::llround(v * n), 0, n));
  };
  PixelBox pb{px(x0, img_w), px(y0, img_h), px(x1, img_w), px(y1, img_h)};
  return pb.valid() ? pb : PixelBox{};
}

Box box_from_pixels(const PixelBox& pb, int img_h, int img_w) {
  if (!pb.valid())
    throw InvalidInputError("box_from_pixels: zero-area pixel box");
  return Box{(pb.x0 + pb.x1) / 2.0 / img_w, (pb.y0 + pb.y1) / 2.0 / img_h,
             double(pb.w()) / img_w, double(pb.h()) / img_h};
}

double box_loss(const Box& pred, const Box& gt, double lambda_l1,
                double lambda_giou) {
  if (lambda_l1 < 0 || lambda_giou < 0)
    throw InvalidInputError("box_loss: negative loss weight");
  double l1 = (std::fabs(pred.cx - gt.cx) + std::fabs(pred.cy - gt.cy) +
               std::fabs(pred.w - gt.w) + std::fabs(pred.h - gt.h)) /
              4.0;
  return lambda_l1 * l1 + lambda_giou * (1.0 - giou(pred, gt));
}

}  // namespace stdnet
