// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stdnet/autodiff.hpp"
#include "stdnet/config.hpp"
#include "stdnet/image.hpp"
#include "stdnet/rng.hpp"
#include "stdnet/tensor.hpp"

namespace stdnet {

// One level of a multi-scale feature pyramid: [C, H_l, W_l] at a fixed
// stride relative to the input frame.
struct FeatureLevel {
  Tensor data;  // [C, H, W]
  int level_index = 0;
  int stride = 1;

  int channels() const { return data.dim(0); }
  int h() const { return data.dim(1); }
  int w() const { return data.dim(2); }
};

struct FeaturePyramid {
  std::vector<FeatureLevel> levels;
  int frame_index = 0;

  int channels() const { return levels.at(0).channels(); }
};

// Pyramids for a temporal clip t-d .. t+d around a center frame.
struct ClipFeatures {
  std::vector<FeaturePyramid> pyramids;  // size 2d+1
  int center_index = 0;                  // frame index of the center
  int radius = 0;
};

// Backbone: a chain of stride-2 3x3 conv+ReLU blocks; the blocks whose
// cumulative stride matches a configured level stride feed the pyramid.
// Parameters live under "backbone." in the store.
void init_backbone_params(ad::ParamStore& params, const BackboneConfig& cfg,
                          Rng& rng);

// Differentiable pyramid extraction on a tape; returns one [C,H_l,W_l] Var
// per level. Throws InvalidInputError when any level would fall below 2x2.
std::vector<ad::Var> extract_pyramid_vars(ad::Tape& tape, ad::ParamBind& p,
                                          const Image& frame,
                                          const BackboneConfig& cfg);

// Inference-path wrapper: runs a private tape and copies values out.
FeaturePyramid extract_pyramid(const ad::ParamStore& params, const Image& frame,
                               const BackboneConfig& cfg, int frame_index);

// Spatial sizes of every pyramid level for a given frame size (conv
// arithmetic: each stride-2 block computes ceil(n/2)).
std::vector<std::pair<int, int>> pyramid_shapes(int frame_h, int frame_w,
                                                const BackboneConfig& cfg);

// phi_l: normalized [0,1]^2 point to level pixel coordinates. Throws on
// points outside the unit square.
std::pair<double, double> rescale_point(double px, double py, int level_w,
                                        int level_h);

// Bilinear lookup at a level-pixel point in the texel-center convention
// (integer coordinates address texel centers). Out-of-map locations
// contribute zero; the function is total.
std::vector<double> bilinear_sample(const FeatureLevel& level, double x,
                                    double y);

// Debug dump: one raw float64 little-endian .bin per level plus
// manifest.json with shapes, strides, and the frame index.
void dump_pyramid(const FeaturePyramid& pyr, const std::string& dir);

}  // namespace stdnet
