// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stdnet/autodiff.hpp"
#include "stdnet/config.hpp"
#include "stdnet/kernels.hpp"
#include "stdnet/rng.hpp"
#include "stdnet/tensor.hpp"

// Spatial and temporal multi-scale deformable attention, their channel-gated
// fusion, and the encoder stack built from them. All forward passes are tape
// ops, so the same code path serves training and inference.

namespace stdnet {

// Flattened multi-scale grid of one frame: levels stacked row-major into a
// [P, C] matrix, with each position's normalized location as its reference
// point.
struct EncoderGeometry {
  std::vector<std::pair<int, int>> level_hw;  // (h, w) per level
  std::vector<int> row0;                      // first row of each level
  int rows = 0;                               // P = sum h*w
  Tensor refs;                                // [P, 2] normalized (x, y)
};

EncoderGeometry encoder_geometry(
    const std::vector<std::pair<int, int>>& level_hw);

// [C,H,W] level Vars of one frame -> [P, C] row matrix.
ad::Var flatten_levels(ad::Tape& tape, const std::vector<ad::Var>& levels);

// Sampling plan of one deformable-attention branch: S slots per head, each
// slot tied to a feature grid (a cell in the stacked value matrix) and the
// phi scaling of its level.
struct DeformPlan {
  std::vector<kernels::DeformCell> cells;
  std::vector<int> cell_of_slot;                    // size S
  std::vector<std::pair<double, double>> slot_scale;  // (W_l, H_l) per slot
  int slots() const { return int(cell_of_slot.size()); }
};

// Spatial plan: slot (l, k) -> level l of a single frame.
DeformPlan spatial_plan(const EncoderGeometry& g, int k_points);
// Temporal plan: slot (j, l, k) -> level l of the j-th stacked neighbor
// frame: the value matrix is the neighbors' rows concatenated in clip order.
DeformPlan temporal_plan(const EncoderGeometry& g, int neighbors,
                         int k_points);

// Shared deformable-attention core. queries [N,C] produce per-head sampling
// offsets (level-pixel units, added after phi) and attention logits
// (softmax-normalized jointly over the S slots of each head); samples come
// from value_proj [R, C], already multiplied by the branch's value
// projection; the output projection is applied after head aggregation.
// Parameters used: {prefix}.off.{w,b}, {prefix}.att.{w,b}, {prefix}.out.{w,b}.
ad::Var deform_attention_core(ad::Tape& tape, ad::ParamBind& p,
                              const std::string& prefix, ad::Var queries,
                              ad::Var refs, ad::Var value_proj,
                              const DeformPlan& plan, int heads);

// One frame of spatial attention (value projection {prefix}.val included):
// each query samples k_intra points per level of its own frame.
ad::Var s_msda(ad::Tape& tape, ad::ParamBind& p, const std::string& prefix,
               ad::Var frame_rows, ad::Var queries, ad::Var refs,
               const EncoderGeometry& g, int heads, int k_intra);

// One frame of temporal attention: each query of the center frame samples
// k_inter points per level from every neighbor frame, with the joint softmax
// spanning all neighbors * levels * points slots of a head.
ad::Var t_msda(ad::Tape& tape, ad::ParamBind& p, const std::string& prefix,
               const std::vector<ad::Var>& neighbor_rows, ad::Var queries,
               ad::Var refs, const EncoderGeometry& g, int heads, int k_inter);

// Channel-gated fusion of the two branches: E' = intra + inter is averaged
// over positions, passed through a shared hidden layer and two branch
// layers; per channel the two gate logits are softmaxed into weights
// (w1, w2) with w1 + w2 == 1 exactly, and E = intra.*w1 + inter.*w2.
// Parameters: {prefix}.h.{w,b}, {prefix}.g1.{w,b}, {prefix}.g2.{w,b}.
ad::Var dynamic_fusion(ad::Tape& tape, ad::ParamBind& p,
                       const std::string& prefix, ad::Var e_intra,
                       ad::Var e_inter);

struct EncoderOut {
  std::vector<ad::Var> e;        // per frame [P, C]
  std::vector<ad::Var> e_intra;  // last layer's spatial branch
  std::vector<ad::Var> e_inter;  // last layer's temporal branch (d >= 1)
  EncoderGeometry geometry;
};

// Encoder stack over a clip of 2d+1 frames (each frame given as its pyramid
// level Vars). Every frame attends spatially to itself and temporally to the
// other 2d clip frames; with d = 0 the temporal branch and fusion are
// bypassed entirely and only the spatial residual path runs.
EncoderOut encoder_forward(ad::Tape& tape, ad::ParamBind& p,
                           const std::vector<std::vector<ad::Var>>& clip_levels,
                           const AttentionConfig& cfg, int channels);

// Creates all encoder parameters ("enc.*"). Offset and attention-logit maps
// start at zero (zero offsets, uniform weights); gate branch layers start at
// zero (g1 == g2, so fusion starts at the plain average).
void init_encoder_params(ad::ParamStore& params, const AttentionConfig& cfg,
                         int channels, int levels, Rng& rng);

}  // namespace stdnet
