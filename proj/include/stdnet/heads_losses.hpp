// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#pragma once

#include <string>
#include <vector>

#include "stdnet/autodiff.hpp"
#include "stdnet/config.hpp"
#include "stdnet/geometry.hpp"
#include "stdnet/rng.hpp"
#include "stdnet/std_attention.hpp"
#include "stdnet/tensor.hpp"

namespace stdnet {

// ---------------------------------------------------------------------------
// Exact bipartite assignment.

// Minimum-cost injective assignment of rows to columns (rows <= cols),
// O(n^2 m) shortest-augmenting-path solver. Among all optimal assignments
// the lexicographically smallest row->col vector is returned, so ties are
// deterministic and match a first-found brute-force search.
std::vector<int> hungarian_assign(const Tensor& cost);

// Ground truth of one frame.
struct FrameGt {
  std::vector<Box> boxes;  // normalized center-size
  std::vector<int> ids;    // stable object identities
};

struct MatchResult {
  std::vector<int> gt_to_query;  // query index per GT object
};

// Set-prediction matching: cost(gt, query) =
//   lambda_cls * (-sigmoid(logit_q)) + box_loss(box_q, box_gt).
// Throws CapacityError when there are more GT objects than queries.
MatchResult hungarian_match(const Tensor& logits, const Tensor& boxes,
                            const FrameGt& gt, const LossConfig& cfg);

// ---------------------------------------------------------------------------
// Decoder.

struct DecodeOut {
  ad::Var logits;  // [Q]
  ad::Var boxes;   // [Q,4] center-size, sigmoid-bounded
  ad::Var reid;    // [Q,reid_dim], rows unit-normalized
  ad::Var hidden;  // [Q,C] final decoder state
};

// Learned queries, per-layer self-attention + deformable cross-attention
// into the frame's encoder output + FFN (post-norm), iterative reference
// refinement through a shared 3-layer box MLP, then the three output heads.
DecodeOut decode_frame(ad::Tape& tape, ad::ParamBind& p, ad::Var frame_e,
                       const EncoderGeometry& g, const DecoderConfig& dcfg,
                       int heads);

void init_decoder_params(ad::ParamStore& params, const DecoderConfig& dcfg,
                         int channels, int levels, int heads, Rng& rng);

// Multi-head self-attention built from tape primitives; q_in/k_in carry any
// positional content. Parameters: {prefix}.{q,k,v,o}.{w,b}.
ad::Var mha(ad::Tape& tape, ad::ParamBind& p, const std::string& prefix,
            ad::Var q_in, ad::Var k_in, ad::Var v_in, int heads);

// ---------------------------------------------------------------------------
// Losses (tape-differentiable).

// Generalized IoU per aligned row pair of [N,4] center-size boxes -> [N].
ad::Var giou_pairs(ad::Tape& tape, ad::Var a, ad::Var b);

// lambda_l1 * mean abs coordinate difference + lambda_giou * mean(1 - giou).
ad::Var box_loss_pairs(ad::Tape& tape, ad::Var pred, ad::Var gt,
                       double lambda_l1, double lambda_giou);

// InfoNCE over cosine similarities. pos_emb [Np,R] holds the anchor
// embeddings, den_emb [Nd,R] the candidate set of the other frame;
// positive_index[i] is the row of anchor i's positive inside den_emb.
// Embeddings are L2-normalized internally, so s() is cosine similarity.
ad::Var infonce_loss(ad::Tape& tape, ad::Var pos_emb, ad::Var den_emb,
                     const std::vector<int>& positive_index, double tau);

// lambda_cls * cls + box + cl, validating that all inputs are finite.
ad::Var total_loss(ad::Tape& tape, ad::Var cls, ad::Var box, ad::Var cl,
                   double lambda_cls);

}  // namespace stdnet
