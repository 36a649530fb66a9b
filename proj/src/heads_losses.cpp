// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]

#include "stdnet/heads_losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "stdnet/errors.hpp"

namespace stdnet {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

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
  p.create(base + ".w",
           zero ? Tensor::zeros({in, out}) : xavier({in, out}, rng));
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

// Shortest augmenting path with potentials (Jonker-Volgenant style),
// rows <= cols. Returns some optimal row -> col map.
std::vector<int> jv_solve(const Tensor& cost) {
  int n = cost.rows(), m = cost.cols();
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(size_t(n) + 1, 0.0), v(size_t(m) + 1, 0.0);
  std::vector<int> match(size_t(m) + 1, 0), way(size_t(m) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(size_t(m) + 1, kInf);
    std::vector<char> used(size_t(m) + 1, 0);
    do {
      used[size_t(j0)] = 1;
      int i0 = match[size_t(j0)], j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= m; ++j) {
        if (used[size_t(j)]) continue;
        double cur = cost.at(i0 - 1, j - 1) - u[size_t(i0)] - v[size_t(j)];
        if (cur < minv[size_t(j)]) {
          minv[size_t(j)] = cur;
          way[size_t(j)] = j0;
        }
        if (minv[size_t(j)] < delta) {
          delta = minv[size_t(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[size_t(j)]) {
          u[size_t(match[size_t(j)])] += delta;
          v[size_t(j)] -= delta;
        } else {
          minv[size_t(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[size_t(j0)] != 0);
    do {
      int j1 = way[size_t(j0)];
      match[size_t(j0)] = match[size_t(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(size_t(n), -1);
  for (int j = 1; j <= m; ++j)
    if (match[size_t(j)] != 0) row_to_col[size_t(match[size_t(j)]) - 1] = j - 1;
  return row_to_col;
}

double assign_value(const Tensor& cost, const std::vector<int>& a,
                    int row0 = 0) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    s += cost.at(int(i) + row0, a[i]);
  return s;
}

}  // namespace

std::vector<int> hungarian_assign(const Tensor& cost) {
  if (cost.ndim() != 2)
    throw InvalidInputError("hungarian_assign: cost must be 2-D");
  int n = cost.rows(), m = cost.cols();
  if (n == 0) return {};
  if (n > m)
    throw InvalidInputError("hungarian_assign: more rows than columns");
  for (int64_t i = 0; i < cost.size(); ++i)
    if (!std::isfinite(cost[i]))
      throw InvalidInputError("hungarian_assign: non-finite cost entry");

  double best = assign_value(cost, jv_solve(cost));
  double tol = 1e-9 * (1.0 + std::abs(best));

  // Fix columns row by row, keeping the smallest column that still admits an
  // optimal completion; yields the lexicographically smallest optimum.
  std::vector<int> fixed(size_t(n), -1);
  std::vector<char> used(size_t(m), 0);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < m && fixed[size_t(i)] < 0; ++c) {
      if (used[size_t(c)]) continue;
      double rest = 0.0;
      int rn = n - i - 1;
      if (rn > 0) {
        std::vector<int> colmap;
        for (int j = 0; j < m; ++j)
          if (!used[size_t(j)] && j != c) colmap.push_back(j);
        Tensor sub({rn, int(colmap.size())});
        for (int r = 0; r < rn; ++r)
          for (size_t j = 0; j < colmap.size(); ++j)
            sub.at(r, int(j)) = cost.at(i + 1 + r, colmap[j]);
        rest = assign_value(sub, jv_solve(sub));
      }
      if (acc + cost.at(i, c) + rest <= best + tol) {
        fixed[size_t(i)] = c;
        used[size_t(c)] = 1;
        acc += cost.at(i, c);
      }
    }
    if (fixed[size_t(i)] < 0)
      throw NumericError("hungarian_assign: no optimal completion found");
  }
  return fixed;
}

MatchResult hungarian_match(const Tensor& logits, const Tensor& boxes,
                            const FrameGt& gt, const LossConfig& cfg) {
  if (logits.ndim() != 1)
    throw InvalidInputError("hungarian_match: logits must be [Q]");
  int q = int(logits.dim(0));
  if (boxes.ndim() != 2 || boxes.rows() != q || boxes.cols() != 4)
    throw InvalidInputError("hungarian_match: boxes must be [Q,4]");
  if (gt.boxes.size() != gt.ids.size())
    throw InvalidInputError("hungarian_match: gt boxes/ids length mismatch");
  int n = int(gt.boxes.size());
  MatchResult res;
  if (n == 0) return res;
  if (n > q)
    throw CapacityError("hungarian_match: more ground-truth objects (" +
                        std::to_string(n) + ") than queries (" +
                        std::to_string(q) + ")");
  Tensor cost({n, q});
  for (int col = 0; col < q; ++col) {
    double p = stable_sigmoid(logits[col]);
    Box pred{boxes.at(col, 0), boxes.at(col, 1), boxes.at(col, 2),
             boxes.at(col, 3)};
    for (int row = 0; row < n; ++row)
      cost.at(row, col) =
          cfg.lambda_cls * (-p) +
          box_loss(pred, gt.boxes[size_t(row)], cfg.lambda_l1, cfg.lambda_giou);
  }
  res.gt_to_query = hungarian_assign(cost);
  return res;
}

ad::Var mha(ad::Tape& tape, ad::ParamBind& p, const std::string& prefix,
            ad::Var q_in, ad::Var k_in, ad::Var v_in, int heads) {
  ad::Var q = lin(tape, p, prefix + ".q", q_in);
  ad::Var k = lin(tape, p, prefix + ".k", k_in);
  ad::Var v = lin(tape, p, prefix + ".v", v_in);
  int c = tape.val(q).cols();
  if (heads <= 0 || c % heads != 0)
    throw InvalidInputError("mha: channels not divisible by heads");
  int hc = c / heads;
  std::vector<ad::Var> outs;
  outs.reserve(size_t(heads));
  for (int m = 0; m < heads; ++m) {
    ad::Var qh = tape.slice_cols(q, m * hc, (m + 1) * hc);
    ad::Var kh = tape.slice_cols(k, m * hc, (m + 1) * hc);
    ad::Var vh = tape.slice_cols(v, m * hc, (m + 1) * hc);
    ad::Var att = tape.softmax_rows(
        tape.affine(tape.matmul_nt(qh, kh), 1.0 / std::sqrt(double(hc)), 0.0));
    outs.push_back(tape.matmul(att, vh));
  }
  ad::Var cat = heads == 1 ? outs[0] : tape.concat_cols(outs);
  return lin(tape, p, prefix + ".o", cat);
}

void init_decoder_params(ad::ParamStore& params, const DecoderConfig& dcfg,
                         int channels, int levels, int heads, Rng& rng) {
  int c = channels, qn = dcfg.queries;
  params.create("dec.tgt", Tensor::zeros({qn, c}));
  Tensor pos({qn, c});
  double pstd = 1.0 / std::sqrt(double(c));
  for (int64_t i = 0; i < pos.size(); ++i) pos[i] = pstd * rng.normal();
  params.create("dec.query_pos", std::move(pos));

  // Reference boxes start on a grid of centers with size 0.2, as logits so
  // the sigmoid-refinement chain starts exactly there.
  int g = 1;
  while (g * g < qn) ++g;
  auto lgt = [](double x) { return std::log(x / (1.0 - x)); };
  Tensor ref({qn, 4});
  for (int i = 0; i < qn; ++i) {
    ref.at(i, 0) = lgt((i % g + 0.5) / g);
    ref.at(i, 1) = lgt((i / g + 0.5) / g);
    ref.at(i, 2) = lgt(0.2);
    ref.at(i, 3) = lgt(0.2);
  }
  params.create("dec.ref", std::move(ref));

  int s = levels * dcfg.k_points;
  for (int l = 0; l < dcfg.n_layers; ++l) {
    std::string lp = "dec.l" + std::to_string(l);
    create_linear(params, lp + ".sa.q", c, c, rng);
    create_linear(params, lp + ".sa.k", c, c, rng);
    create_linear(params, lp + ".sa.v", c, c, rng);
    create_linear(params, lp + ".sa.o", c, c, rng);
    create_linear(params, lp + ".ca.val", c, c, rng);
    create_linear(params, lp + ".ca.off", c, heads * s * 2, rng, true);
    create_linear(params, lp + ".ca.att", c, heads * s, rng, true);
    create_linear(params, lp + ".ca.out", c, c, rng);
    create_linear(params, lp + ".f1", c, 4 * c, rng);
    create_linear(params, lp + ".f2", 4 * c, c, rng);
    create_norm(params, lp + ".n1", c);
    create_norm(params, lp + ".n2", c);
    create_norm(params, lp + ".n3", c);
  }
  // Box deltas start at zero so layer-0 boxes equal the learned references.
  create_linear(params, "dec.box.m1", c, c, rng);
  create_linear(params, "dec.box.m2", c, c, rng);
  create_linear(params, "dec.box.m3", c, 4, rng, true);
  create_linear(params, "dec.cls", c, 1, rng);
  params.get("dec.cls.b")[0] = -std::log(99.0);  // rare-foreground prior
  create_linear(params, "dec.reid.f1", c, c, rng);
  create_linear(params, "dec.reid.f2", c, dcfg.reid_dim, rng);
}

DecodeOut decode_frame(ad::Tape& tape, ad::ParamBind& p, ad::Var frame_e,
                       const EncoderGeometry& g, const DecoderConfig& dcfg,
                       int heads) {
  // copy shape facts out before binding parameters: pushing nodes can
  // reallocate the tape and invalidate references into it
  const Tensor& e = tape.val(frame_e);
  if (e.ndim() != 2 || e.rows() != g.rows)
    throw InvalidInputError("decode_frame: encoder rows/geometry mismatch");
  const int e_cols = e.cols();
  ad::Var h = p("dec.tgt");
  ad::Var pos = p("dec.query_pos");
  const Tensor& t = tape.val(h);
  if (t.rows() != dcfg.queries || t.cols() != e_cols)
    throw InvalidInputError("decode_frame: query/channel shape mismatch");
  ad::Var ref = tape.sigmoid(p("dec.ref"));  // [Q,4] center-size
  DeformPlan plan = spatial_plan(g, dcfg.k_points);

  for (int l = 0; l < dcfg.n_layers; ++l) {
    std::string lp = "dec.l" + std::to_string(l);
    ad::Var qk = tape.add(h, pos);
    ad::Var sa = mha(tape, p, lp + ".sa", qk, qk, h, heads);
    h = ln(tape, p, lp + ".n1", tape.add(h, sa));

    ad::Var value = lin(tape, p, lp + ".ca.val", frame_e);
    ad::Var centers = tape.slice_cols(ref, 0, 2);
    ad::Var ca = deform_attention_core(tape, p, lp + ".ca", tape.add(h, pos),
                                       centers, value, plan, heads);
    h = ln(tape, p, lp + ".n2", tape.add(h, ca));

    ad::Var f = lin(tape, p, lp + ".f2", tape.relu(lin(tape, p, lp + ".f1", h)));
    h = ln(tape, p, lp + ".n3", tape.add(h, f));

    // Iterative refinement through the shared box head, in logit space.
    ad::Var delta =
        lin(tape, p, "dec.box.m3",
            tape.relu(lin(tape, p, "dec.box.m2",
                          tape.relu(lin(tape, p, "dec.box.m1", h)))));
    ref = tape.sigmoid(tape.add(delta, tape.logit(ref)));
  }

  DecodeOut out;
  out.logits = tape.reshape(lin(tape, p, "dec.cls", h), {dcfg.queries});
  out.boxes = ref;
  out.reid = tape.l2_normalize_rows(
      lin(tape, p, "dec.reid.f2", tape.relu(lin(tape, p, "dec.reid.f1", h))));
  out.hidden = h;
  return out;
}

ad::Var giou_pairs(ad::Tape& tape, ad::Var a, ad::Var b) {
  const Tensor& ta = tape.val(a);
  const Tensor& tb = tape.val(b);
  if (ta.ndim() != 2 || ta.cols() != 4 || !ta.same_shape(tb))
    throw InvalidInputError("giou_pairs: expects matching [N,4] inputs");
  for (int r = 0; r < ta.rows(); ++r)
    if (ta.at(r, 2) <= 0 || ta.at(r, 3) <= 0 || tb.at(r, 2) <= 0 ||
        tb.at(r, 3) <= 0)
      throw InvalidInputError("giou_pairs: boxes must have positive size");
  int n = ta.rows();

  auto corners = [&](ad::Var box) {
    ad::Var cx = tape.slice_cols(box, 0, 1);
    ad::Var cy = tape.slice_cols(box, 1, 2);
    ad::Var w = tape.slice_cols(box, 2, 3);
    ad::Var hh = tape.slice_cols(box, 3, 4);
    ad::Var hw = tape.affine(w, 0.5, 0.0);
    ad::Var hv = tape.affine(hh, 0.5, 0.0);
    return std::array<ad::Var, 6>{tape.sub(cx, hw), tape.sub(cy, hv),
                                  tape.add(cx, hw), tape.add(cy, hv), w, hh};
  };
  auto [ax0, ay0, ax1, ay1, aw, ah] = corners(a);
  auto [bx0, by0, bx1, by1, bw, bh] = corners(b);

  ad::Var iw =
      tape.relu(tape.sub(tape.minimum(ax1, bx1), tape.maximum(ax0, bx0)));
  ad::Var ih =
      tape.relu(tape.sub(tape.minimum(ay1, by1), tape.maximum(ay0, by0)));
  ad::Var inter = tape.mul(iw, ih);
  ad::Var uni = tape.sub(tape.add(tape.mul(aw, ah), tape.mul(bw, bh)), inter);
  ad::Var cw = tape.sub(tape.maximum(ax1, bx1), tape.minimum(ax0, bx0));
  ad::Var ch = tape.sub(tape.maximum(ay1, by1), tape.minimum(ay0, by0));
  ad::Var hull = tape.mul(cw, ch);
  ad::Var giou =
      tape.sub(tape.div(inter, uni), tape.div(tape.sub(hull, uni), hull));
  return tape.reshape(giou, {n});
}

ad::Var box_loss_pairs(ad::Tape& tape, ad::Var pred, ad::Var gt,
                       double lambda_l1, double lambda_giou) {
  if (lambda_l1 < 0 || lambda_giou < 0)
    throw InvalidInputError("box_loss_pairs: negative loss weight");
  ad::Var l1 = tape.mean(tape.abs(tape.sub(pred, gt)));
  ad::Var gm = tape.mean(tape.affine(giou_pairs(tape, pred, gt), -1.0, 1.0));
  return tape.add(tape.affine(l1, lambda_l1, 0.0),
                  tape.affine(gm, lambda_giou, 0.0));
}

ad::Var infonce_loss(ad::Tape& tape, ad::Var pos_emb, ad::Var den_emb,
                     const std::vector<int>& positive_index, double tau) {
  if (!(tau > 0.0)) throw ConfigError("infonce: temperature must be positive");
  const Tensor& pe = tape.val(pos_emb);
  const Tensor& de = tape.val(den_emb);
  if (pe.ndim() != 2 || de.ndim() != 2 || pe.cols() != de.cols())
    throw InvalidInputError("infonce: embedding shape mismatch");
  int np = pe.rows(), nd = de.rows();
  if (int(positive_index.size()) != np)
    throw InvalidInputError("infonce: one positive index per anchor required");
  if (np == 0) return tape.leaf(Tensor::scalar(0.0));
  std::vector<int> flat(size_t(np), 0);
  for (int i = 0; i < np; ++i) {
    if (positive_index[size_t(i)] < 0 || positive_index[size_t(i)] >= nd)
      throw InvalidInputError("infonce: positive index out of range");
    flat[size_t(i)] = i * nd + positive_index[size_t(i)];
  }
  ad::Var sim = tape.matmul_nt(tape.l2_normalize_rows(pos_emb),
                               tape.l2_normalize_rows(den_emb));
  ad::Var scaled = tape.affine(sim, 1.0 / tau, 0.0);
  ad::Var lse = tape.logsumexp_rows(scaled);
  ad::Var pos = tape.gather_flat(scaled, std::move(flat));
  return tape.mean(tape.sub(lse, pos));
}

ad::Var total_loss(ad::Tape& tape, ad::Var cls, ad::Var box, ad::Var cl,
                   double lambda_cls) {
  auto check = [&](ad::Var v, const char* name) {
    const Tensor& t = tape.val(v);
    if (t.size() != 1)
      throw InvalidInputError(std::string("total_loss: ") + name +
                              " must be a scalar");
    if (!std::isfinite(t[0]))
      throw NumericError(std::string("total_loss: non-finite ") + name);
  };
  check(cls, "cls");
  check(box, "box");
  check(cl, "cl");
  return tape.add(tape.affine(cls, lambda_cls, 0.0), tape.add(box, cl));
}

}  // namespace stdnet
