// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]

#include "stdnet/std_attention.hpp"

#include <cmath>

#include "stdnet/errors.hpp"

namespace stdnet {

namespace {

Tensor xavier(std::vector<int> shape, Rng& rng) {
  Tensor t(shape);
  double fan_in = shape.size() == 2 ? shape[0] : double(t.size());
  double fan_out = shape.size() == 2 ? shape[1] : double(t.size());
  double std = std::sqrt(2.0 / (fan_in + fan_out));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = std * rng.normal();
  return t;
}

void create_linear(ad::ParamStore& p, const std::string& base, int in, int out,
                   Rng& rng, bool zero = false) {
  p.create(base + ".w", zero ? Tensor::zeros({in, out})
                             : xavier({in, out}, rng));
  p.create(base + ".b", Tensor::zeros({out}));
}

void create_norm(ad::ParamStore& p, const std::string& base, int c) {
  p.create(base + ".g", Tensor::full({c}, 1.0));
  p.create(base + ".b", Tensor::zeros({c}));
}

ad::Var ln(ad::Tape& t, ad::ParamBind& p, const std::string& base, ad::Var x) {
  return t.layernorm(x, p(base + ".g"), p(base + ".b"));
}

ad::Var lin(ad::Tape& t, ad::ParamBind& p, const std::string& base,
            ad::Var x) {
  return t.linear(x, p(base + ".w"), p(base + ".b"));
}

}  // namespace

EncoderGeometry encoder_geometry(
    const std::vector<std::pair<int, int>>& level_hw) {
  EncoderGeometry g;
  g.level_hw = level_hw;
  int rows = 0;
  for (auto [h, w] : level_hw) {
    if (h < 2 || w < 2)
      throw InvalidInputError("encoder_geometry: levels must be >= 2x2");
    g.row0.push_back(rows);
    rows += h * w;
  }
  g.rows = rows;
  g.refs = Tensor({rows, 2});
  for (size_t l = 0; l < level_hw.size(); ++l) {
    auto [h, w] = level_hw[l];
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        int r = g.row0[l] + i * w + j;
        g.refs.at(r, 0) = (j + 0.5) / w;
        g.refs.at(r, 1) = (i + 0.5) / h;
      }
  }
  return g;
}

ad::Var flatten_levels(ad::Tape& tape, const std::vector<ad::Var>& levels) {
  std::vector<ad::Var> rows;
  rows.reserve(levels.size());
  for (ad::Var lvl : levels) rows.push_back(tape.chw_to_rows(lvl));
  return tape.concat_rows(rows);
}

DeformPlan spatial_plan(const EncoderGeometry& g, int k_points) {
  DeformPlan plan;
  int L = int(g.level_hw.size());
  for (int l = 0; l < L; ++l) {
    auto [h, w] = g.level_hw[size_t(l)];
    plan.cells.push_back(kernels::DeformCell{g.row0[size_t(l)], h, w});
  }
  for (int l = 0; l < L; ++l)
    for (int k = 0; k < k_points; ++k) {
      plan.cell_of_slot.push_back(l);
      auto [h, w] = g.level_hw[size_t(l)];
      plan.slot_scale.emplace_back(double(w), double(h));
    }
  return plan;
}

DeformPlan temporal_plan(const EncoderGeometry& g, int neighbors,
                         int k_points) {
  DeformPlan plan;
  int L = int(g.level_hw.size());
  for (int j = 0; j < neighbors; ++j)
    for (int l = 0; l < L; ++l) {
      auto [h, w] = g.level_hw[size_t(l)];
      plan.cells.push_back(
          kernels::DeformCell{j * g.rows + g.row0[size_t(l)], h, w});
    }
  for (int j = 0; j < neighbors; ++j)
    for (int l = 0; l < L; ++l)
      for (int k = 0; k < k_points; ++k) {
        plan.cell_of_slot.push_back(j * L + l);
        auto [h, w] = g.level_hw[size_t(l)];
        plan.slot_scale.emplace_back(double(w), double(h));
      }
  return plan;
}

ad::Var deform_attention_core(ad::Tape& tape, ad::ParamBind& p,
                              const std::string& prefix, ad::Var queries,
                              ad::Var refs, ad::Var value_proj,
                              const DeformPlan& plan, int heads) {
  const Tensor& q = tape.val(queries);
  int n = q.rows(), c = q.cols();
  if (c % heads != 0)
    throw InvalidInputError("deform_attention: channels not divisible by heads");
  int head_ch = c / heads;
  int s = plan.slots();

  // Per-head offsets and attention logits from the query content.
  ad::Var off = lin(tape, p, prefix + ".off", queries);  // [N, M*S*2]
  ad::Var att = lin(tape, p, prefix + ".att", queries);  // [N, M*S]
  ad::Var wts = tape.softmax_rows(tape.reshape(att, {n * heads, s}));
  wts = tape.reshape(wts, {int(int64_t(n) * heads * s)});

  // phi_l(ref) per slot, expanded to one row per (query, head, slot).
  std::vector<int> qidx(size_t(n) * heads * s);
  Tensor scale({n * heads * s, 2});
  for (int i = 0; i < n; ++i)
    for (int m = 0; m < heads; ++m)
      for (int k = 0; k < s; ++k) {
        int64_t r = (int64_t(i) * heads + m) * s + k;
        qidx[size_t(r)] = i;
        scale[2 * r] = plan.slot_scale[size_t(k)].first;
        scale[2 * r + 1] = plan.slot_scale[size_t(k)].second;
      }
  ad::Var base = tape.affine(tape.gather_rows(refs, std::move(qidx)),
                             std::move(scale),
                             Tensor::zeros({n * heads * s, 2}));
  ad::Var locs = tape.add(base, tape.reshape(off, {n * heads * s, 2}));

  ad::Var sampled = tape.ms_deform_sample(value_proj, locs, wts, plan.cells,
                                          plan.cell_of_slot, n, heads,
                                          head_ch);
  return lin(tape, p, prefix + ".out", sampled);
}

ad::Var s_msda(ad::Tape& tape, ad::ParamBind& p, const std::string& prefix,
               ad::Var frame_rows, ad::Var queries, ad::Var refs,
               const EncoderGeometry& g, int heads, int k_intra) {
  DeformPlan plan = spatial_plan(g, k_intra);
  ad::Var value = lin(tape, p, prefix + ".val", frame_rows);
  return deform_attention_core(tape, p, prefix, queries, refs, value, plan,
                               heads);
}

ad::Var t_msda(ad::Tape& tape, ad::ParamBind& p, const std::string& prefix,
               const std::vector<ad::Var>& neighbor_rows, ad::Var queries,
               ad::Var refs, const EncoderGeometry& g, int heads,
               int k_inter) {
  if (neighbor_rows.empty())
    throw InvalidInputError("t_msda: requires at least one neighbor frame");
  DeformPlan plan = temporal_plan(g, int(neighbor_rows.size()), k_inter);
  std::vector<ad::Var> projected;
  projected.reserve(neighbor_rows.size());
  for (ad::Var rows : neighbor_rows)
    projected.push_back(lin(tape, p, prefix + ".val", rows));
  ad::Var value = projected.size() == 1 ? projected[0]
                                        : tape.concat_rows(projected);
  return deform_attention_core(tape, p, prefix, queries, refs, value, plan,
                               heads);
}

ad::Var dynamic_fusion(ad::Tape& tape, ad::ParamBind& p,
                       const std::string& prefix, ad::Var e_intra,
                       ad::Var e_inter) {
  const Tensor& a = tape.val(e_intra);
  const Tensor& b = tape.val(e_inter);
  if (!a.same_shape(b))
    throw InvalidInputError("dynamic_fusion: branch shape mismatch");
  int c = a.cols();
  ad::Var eprime = tape.add(e_intra, e_inter);
  ad::Var squeeze = tape.reshape(tape.mean_rows(eprime), {1, c});
  ad::Var hidden = tape.relu(lin(tape, p, prefix + ".h", squeeze));
  ad::Var g1 = lin(tape, p, prefix + ".g1", hidden);  // [1, C]
  ad::Var g2 = lin(tape, p, prefix + ".g2", hidden);
  // Two-way channel softmax: w1 = sigmoid(g1 - g2) and w2 = 1 - w1, which
  // keeps w1 + w2 == 1 exactly in floating point.
  ad::Var w1 = tape.reshape(tape.sigmoid(tape.sub(g1, g2)), {c});
  ad::Var w2 = tape.affine(w1, -1.0, 1.0);
  return tape.add(tape.mul_rowvec(e_intra, w1), tape.mul_rowvec(e_inter, w2));
}

EncoderOut encoder_forward(ad::Tape& tape, ad::ParamBind& p,
                           const std::vector<std::vector<ad::Var>>& clip_levels,
                           const AttentionConfig& cfg, int channels) {
  int frames = int(clip_levels.size());
  if (frames != 2 * cfg.d + 1)
    throw InvalidInputError("encoder_forward: clip must have 2d+1 frames");

  // Flatten each frame and derive the shared geometry.
  std::vector<std::pair<int, int>> level_hw;
  for (ad::Var lvl : clip_levels[0]) {
    const Tensor& v = tape.val(lvl);
    level_hw.emplace_back(v.dim(1), v.dim(2));
  }
  EncoderOut out;
  out.geometry = encoder_geometry(level_hw);
  ad::Var refs = tape.leaf(out.geometry.refs);

  std::vector<ad::Var> x;
  x.reserve(size_t(frames));
  for (const auto& levels : clip_levels) {
    if (int(levels.size()) != int(level_hw.size()))
      throw InvalidInputError("encoder_forward: level count mismatch");
    x.push_back(flatten_levels(tape, levels));
    if (tape.val(x.back()).cols() != channels)
      throw InvalidInputError("encoder_forward: channel width mismatch");
  }

  for (int layer = 0; layer < cfg.n_layers; ++layer) {
    std::string lp = "enc.l" + std::to_string(layer);
    std::vector<ad::Var> tval;
    if (cfg.d >= 1) {
      // Temporal value projection once per frame, reused by every center.
      tval.reserve(size_t(frames));
      for (int f = 0; f < frames; ++f)
        tval.push_back(lin(tape, p, lp + ".t.val", x[size_t(f)]));
    }

    std::vector<ad::Var> next;
    next.resize(size_t(frames));
    out.e_intra.clear();
    out.e_inter.clear();
    for (int f = 0; f < frames; ++f) {
      ad::Var sval = lin(tape, p, lp + ".s.val", x[size_t(f)]);
      DeformPlan splan = spatial_plan(out.geometry, cfg.k_intra);
      ad::Var intra = deform_attention_core(tape, p, lp + ".s", x[size_t(f)],
                                            refs, sval, splan, cfg.heads);
      ad::Var fused = intra;
      if (cfg.d >= 1) {
        std::vector<ad::Var> neighbors;
        neighbors.reserve(size_t(frames) - 1);
        for (int j = 0; j < frames; ++j)
          if (j != f) neighbors.push_back(tval[size_t(j)]);
        DeformPlan tplan =
            temporal_plan(out.geometry, int(neighbors.size()), cfg.k_inter);
        ad::Var value = neighbors.size() == 1 ? neighbors[0]
                                              : tape.concat_rows(neighbors);
        ad::Var inter = deform_attention_core(tape, p, lp + ".t", x[size_t(f)],
                                              refs, value, tplan, cfg.heads);
        fused = dynamic_fusion(tape, p, lp + ".fu", intra, inter);
        out.e_inter.push_back(inter);
      }
      out.e_intra.push_back(intra);

      ad::Var h = ln(tape, p, lp + ".n1", tape.add(x[size_t(f)], fused));
      ad::Var ff = lin(tape, p, lp + ".f2",
                       tape.relu(lin(tape, p, lp + ".f1", h)));
      next[size_t(f)] = ln(tape, p, lp + ".n2", tape.add(h, ff));
    }
    x = std::move(next);
  }
  out.e = std::move(x);
  return out;
}

void init_encoder_params(ad::ParamStore& params, const AttentionConfig& cfg,
                         int channels, int levels, Rng& rng) {
  int c = channels;
  for (int layer = 0; layer < cfg.n_layers; ++layer) {
    std::string lp = "enc.l" + std::to_string(layer);
    int s_slots = levels * cfg.k_intra;
    create_linear(params, lp + ".s.val", c, c, rng);
    create_linear(params, lp + ".s.off", c, cfg.heads * s_slots * 2, rng,
                  /*zero=*/true);
    create_linear(params, lp + ".s.att", c, cfg.heads * s_slots, rng,
                  /*zero=*/true);
    create_linear(params, lp + ".s.out", c, c, rng);
    if (cfg.d >= 1) {
      int t_slots = 2 * cfg.d * levels * cfg.k_inter;
      create_linear(params, lp + ".t.val", c, c, rng);
      create_linear(params, lp + ".t.off", c, cfg.heads * t_slots * 2, rng,
                    /*zero=*/true);
      create_linear(params, lp + ".t.att", c, cfg.heads * t_slots, rng,
                    /*zero=*/true);
      create_linear(params, lp + ".t.out", c, c, rng);
      create_linear(params, lp + ".fu.h", c, cfg.fusion_hidden, rng);
      create_linear(params, lp + ".fu.g1", cfg.fusion_hidden, c, rng,
                    /*zero=*/true);
      create_linear(params, lp + ".fu.g2", cfg.fusion_hidden, c, rng,
                    /*zero=*/true);
    }
    create_norm(params, lp + ".n1", c);
    create_norm(params, lp + ".n2", c);
    create_linear(params, lp + ".f1", c, cfg.ffn_hidden, rng);
    create_linear(params, lp + ".f2", cfg.ffn_hidden, c, rng);
  }
}

}  // namespace stdnet
