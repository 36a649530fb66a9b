// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "stdnet/errors.hpp"
#include "stdnet/heads_losses.hpp"

using namespace stdnet;
using namespace testutil;

namespace {

// First-found optimal assignment by exhaustive search: rows in order, columns
// ascending, strict improvement only. With integer costs this is exactly the
// lexicographically smallest optimum.
void brute_assign(const Tensor& cost, int row, std::vector<int>& cur,
                  std::vector<char>& used, double acc, double& best,
                  std::vector<int>& out) {
  int n = cost.rows(), m = cost.cols();
  if (row == n) {
    if (acc < best) {
      best = acc;
      out = cur;
    }
    return;
  }
  for (int c = 0; c < m; ++c) {
    if (used[size_t(c)]) continue;
    used[size_t(c)] = 1;
    cur[size_t(row)] = c;
    brute_assign(cost, row + 1, cur, used, acc + cost.at(row, c), best, out);
    used[size_t(c)] = 0;
  }
}

std::vector<int> brute_force_assign(const Tensor& cost) {
  std::vector<int> cur(size_t(cost.rows()), -1), out;
  std::vector<char> used(size_t(cost.cols()), 0);
  double best = std::numeric_limits<double>::infinity();
  brute_assign(cost, 0, cur, used, 0.0, best, out);
  return out;
}

}  // namespace

TEST_CASE("hungarian assignment pinned cases") {
  CHECK(hungarian_assign(Tensor({2, 2}, {1, 2, 2, 1})) ==
        std::vector<int>{0, 1});
  CHECK(hungarian_assign(Tensor({2, 2}, {2, 1, 1, 2})) ==
        std::vector<int>{1, 0});
  // every assignment optimal: ties resolve to the lexicographically smallest
  CHECK(hungarian_assign(Tensor::full({3, 3}, 7.0)) ==
        std::vector<int>{0, 1, 2});
  // rectangular: the expensive column is skipped
  CHECK(hungarian_assign(Tensor({2, 3}, {9, 1, 2, 9, 2, 1})) ==
        std::vector<int>{1, 2});
  CHECK(hungarian_assign(Tensor({0, 3})).empty());

  CHECK_THROWS_AS(hungarian_assign(Tensor({3, 2})), InvalidInputError);
  Tensor bad({1, 2}, {1.0, std::nan("")});
  CHECK_THROWS_AS(hungarian_assign(bad), InvalidInputError);
  CHECK_THROWS_AS(hungarian_assign(Tensor({4})), InvalidInputError);
}

TEST_CASE("hungarian assignment equals first-found brute force") {
  Rng rng(211);
  for (int trial = 0; trial < 250; ++trial) {
    int n = rng.uniform_int(1, 6);
    int m = n + rng.uniform_int(0, 2);
    Tensor cost({n, m});
    // small integer costs make ties exact, so the tie-break is observable
    for (int64_t i = 0; i < cost.size(); ++i)
      cost[i] = double(rng.uniform_int(0, 9));
    CHECK(hungarian_assign(cost) == brute_force_assign(cost));
  }
}

TEST_CASE("set matching follows the documented cost and capacity rule") {
  LossConfig cfg;
  Rng rng(223);
  for (int trial = 0; trial < 50; ++trial) {
    int q = rng.uniform_int(2, 5), n = rng.uniform_int(1, q);
    Tensor logits = rand_tensor({q}, rng, -3, 3);
    Tensor boxes({q, 4});
    FrameGt gt;
    auto rand_box = [&] {
      return Box{rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7),
                 rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4)};
    };
    for (int i = 0; i < q; ++i) {
      Box b = rand_box();
      boxes.at(i, 0) = b.cx;
      boxes.at(i, 1) = b.cy;
      boxes.at(i, 2) = b.w;
      boxes.at(i, 3) = b.h;
    }
    for (int i = 0; i < n; ++i) {
      gt.boxes.push_back(rand_box());
      gt.ids.push_back(i + 1);
    }

    Tensor cost({n, q});
    for (int col = 0; col < q; ++col) {
      double p = 1.0 / (1.0 + std::exp(-logits[col]));
      Box pred{boxes.at(col, 0), boxes.at(col, 1), boxes.at(col, 2),
               boxes.at(col, 3)};
      for (int row = 0; row < n; ++row)
        cost.at(row, col) = cfg.lambda_cls * (-p) +
                            box_loss(pred, gt.boxes[size_t(row)],
                                     cfg.lambda_l1, cfg.lambda_giou);
    }
    MatchResult got = hungarian_match(logits, boxes, gt, cfg);
    std::vector<int> want = brute_force_assign(cost);
    double got_cost = 0, want_cost = 0;
    for (int i = 0; i < n; ++i) {
      got_cost += cost.at(i, got.gt_to_query[size_t(i)]);
      want_cost += cost.at(i, want[size_t(i)]);
    }
    CHECK(got_cost == doctest::Approx(want_cost).epsilon(1e-12));
  }

  FrameGt over;
  for (int i = 0; i < 4; ++i) {
    over.boxes.push_back(Box{0.5, 0.5, 0.2, 0.2});
    over.ids.push_back(i);
  }
  Tensor logits({3}), boxes = Tensor::full({3, 4}, 0.5);
  CHECK_THROWS_AS(hungarian_match(logits, boxes, over, cfg), CapacityError);
}

TEST_CASE("pairwise giou matches the scalar implementation") {
  Rng rng(227);
  int n = 40;
  Tensor a({n, 4}), b({n, 4});
  for (int i = 0; i < n; ++i) {
    a.at(i, 0) = rng.uniform(0.2, 0.8);
    a.at(i, 1) = rng.uniform(0.2, 0.8);
    a.at(i, 2) = rng.uniform(0.05, 0.5);
    a.at(i, 3) = rng.uniform(0.05, 0.5);
    b.at(i, 0) = rng.uniform(0.2, 0.8);
    b.at(i, 1) = rng.uniform(0.2, 0.8);
    b.at(i, 2) = rng.uniform(0.05, 0.5);
    b.at(i, 3) = rng.uniform(0.05, 0.5);
  }
  ad::Tape tape;
  ad::Var g = giou_pairs(tape, tape.leaf(a), tape.leaf(b));
  const Tensor& got = tape.val(g);
  CHECK(got.dim(0) == n);
  for (int i = 0; i < n; ++i) {
    Box ba{a.at(i, 0), a.at(i, 1), a.at(i, 2), a.at(i, 3)};
    Box bb{b.at(i, 0), b.at(i, 1), b.at(i, 2), b.at(i, 3)};
    CHECK(got[i] == doctest::Approx(giou(ba, bb)).epsilon(1e-12));
  }

  Tensor degenerate = Tensor::full({1, 4}, 0.5);
  degenerate.at(0, 2) = 0.0;
  ad::Tape t2;
  CHECK_THROWS_AS(
      giou_pairs(t2, t2.leaf(degenerate), t2.leaf(Tensor::full({1, 4}, 0.5))),
      InvalidInputError);
}

TEST_CASE("box loss vanishes exactly on a perfect prediction") {
  Tensor boxes({3, 4}, {0.3, 0.4, 0.2, 0.1, 0.5, 0.5, 0.3, 0.3, 0.7, 0.6, 0.1,
                        0.2});
  ad::Tape tape;
  ad::Var same = box_loss_pairs(tape, tape.leaf(boxes), tape.leaf(boxes), 5.0,
                                2.0);
  CHECK(tape.val(same)[0] == 0.0);

  Tensor other = boxes;
  other.at(0, 0) += 0.1;
  ad::Var diff = box_loss_pairs(tape, tape.leaf(boxes), tape.leaf(other), 5.0,
                                2.0);
  CHECK(tape.val(diff)[0] > 0.0);
  CHECK_THROWS_AS(
      box_loss_pairs(tape, tape.leaf(boxes), tape.leaf(boxes), -1.0, 2.0),
      InvalidInputError);
}

TEST_CASE("contrastive loss closed forms") {
  // single anchor whose positive is the entire candidate set
  ad::Tape tape;
  Tensor e({1, 3}, {0.2, -0.4, 0.9});
  ad::Var zero = infonce_loss(tape, tape.leaf(e), tape.leaf(e), {0}, 0.1);
  CHECK(tape.val(zero)[0] == 0.0);

  // orthogonal negatives at tau = 1: loss = log((e + 2) / e)
  Tensor pos({1, 2}, {1.0, 0.0});
  Tensor den({3, 2}, {1.0, 0.0, 0.0, 1.0, 0.0, -1.0});
  ad::Var l = infonce_loss(tape, tape.leaf(pos), tape.leaf(den), {0}, 1.0);
  CHECK(tape.val(l)[0] ==
        doctest::Approx(std::log((std::exp(1.0) + 2.0) / std::exp(1.0)))
            .epsilon(1e-12));

  // loop oracle on random instances
  Rng rng(229);
  for (int trial = 0; trial < 20; ++trial) {
    int np = rng.uniform_int(1, 5), nd = rng.uniform_int(np, 7), r = 6;
    double tau = rng.uniform(0.05, 1.0);
    Tensor pe = rand_tensor({np, r}, rng), de = rand_tensor({nd, r}, rng);
    std::vector<int> pidx;
    for (int i = 0; i < np; ++i) pidx.push_back(rng.uniform_int(0, nd - 1));

    auto unit = [&](const Tensor& t, int row, int col) {
      double n2 = 0;
      for (int c = 0; c < r; ++c) n2 += t.at(row, c) * t.at(row, c);
      return t.at(row, col) / std::sqrt(n2);
    };
    double want = 0;
    for (int i = 0; i < np; ++i) {
      double mx = -1e300;
      std::vector<double> s(size_t(nd), 0.0);
      for (int j = 0; j < nd; ++j) {
        for (int c = 0; c < r; ++c) s[size_t(j)] += unit(pe, i, c) * unit(de, j, c);
        s[size_t(j)] /= tau;
        mx = std::max(mx, s[size_t(j)]);
      }
      double z = 0;
      for (int j = 0; j < nd; ++j) z += std::exp(s[size_t(j)] - mx);
      want += (mx + std::log(z)) - s[size_t(pidx[size_t(i)])];
    }
    want /= np;
    ad::Tape t2;
    ad::Var got = infonce_loss(t2, t2.leaf(pe), t2.leaf(de), pidx, tau);
    CHECK(t2.val(got)[0] == doctest::Approx(want).epsilon(1e-9));
  }

  ad::Tape t3;
  CHECK_THROWS_AS(
      infonce_loss(t3, t3.leaf(pos), t3.leaf(den), {5}, 1.0),
      InvalidInputError);
  CHECK_THROWS_AS(infonce_loss(t3, t3.leaf(pos), t3.leaf(den), {0}, 0.0),
                  ConfigError);
  ad::Var empty =
      infonce_loss(t3, t3.leaf(Tensor({0, 2})), t3.leaf(den), {}, 1.0);
  CHECK(t3.val(empty)[0] == 0.0);
}

TEST_CASE("total loss composition and finiteness guard") {
  ad::Tape tape;
  ad::Var cls = tape.leaf(Tensor::scalar(2.0));
  ad::Var box = tape.leaf(Tensor::scalar(1.0));
  ad::Var cl = tape.leaf(Tensor::scalar(0.5));
  CHECK(tape.val(total_loss(tape, cls, box, cl, 2.0))[0] ==
        doctest::Approx(5.5));

  ad::Var nan = tape.leaf(Tensor::scalar(std::nan("")));
  CHECK_THROWS_AS(total_loss(tape, nan, box, cl, 2.0), NumericError);
  ad::Var vec = tape.leaf(Tensor({2}));
  CHECK_THROWS_AS(total_loss(tape, vec, box, cl, 2.0), InvalidInputError);
}

TEST_CASE("multi-head self-attention is permutation-equivariant") {
  Rng rng(233);
  const int c = 8;
  ad::ParamStore ps;
  for (const char* base : {"at.q", "at.k", "at.v", "at.o"}) {
    ps.create(std::string(base) + ".w", rand_tensor({c, c}, rng));
    ps.create(std::string(base) + ".b", rand_tensor({c}, rng));
  }
  Tensor x = rand_tensor({5, c}, rng);
  std::vector<int> perm = {3, 0, 4, 1, 2};
  Tensor px({5, c});
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < c; ++j) px.at(i, j) = x.at(perm[size_t(i)], j);

  ad::Tape tape;
  ad::ParamBind bind(tape, ps);
  ad::Var xv = tape.leaf(x);
  ad::Var out = mha(tape, bind, "at", xv, xv, xv, 2);
  ad::Var pxv = tape.leaf(px);
  ad::Var pout = mha(tape, bind, "at", pxv, pxv, pxv, 2);
  const Tensor& o = tape.val(out);
  const Tensor& po = tape.val(pout);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < c; ++j)
      CHECK(po.at(i, j) ==
            doctest::Approx(o.at(perm[size_t(i)], j)).epsilon(1e-12));

  CHECK_THROWS_AS(mha(tape, bind, "at", xv, xv, xv, 3), InvalidInputError);
}

TEST_CASE("decoder heads: shapes, bounds, unit-norm embeddings, priors") {
  Rng rng(239);
  DecoderConfig dcfg;
  dcfg.queries = 9;
  dcfg.n_layers = 2;
  dcfg.k_points = 2;
  dcfg.reid_dim = 8;
  const int c = 16, heads = 2;
  EncoderGeometry g = encoder_geometry({{4, 4}, {2, 2}});

  ad::ParamStore ps;
  init_decoder_params(ps, dcfg, c, 2, heads, rng);
  CHECK(ps.get("dec.cls.b")[0] == doctest::Approx(-std::log(99.0)));
  CHECK(ps.get("dec.box.m3.w").max_abs() == 0.0);
  CHECK(ps.get("dec.l0.ca.off.w").max_abs() == 0.0);

  ad::Tape tape;
  ad::ParamBind bind(tape, ps);
  ad::Var frame = tape.leaf(rand_tensor({g.rows, c}, rng));
  DecodeOut out = decode_frame(tape, bind, frame, g, dcfg, heads);

  const Tensor& logits = tape.val(out.logits);
  const Tensor& boxes = tape.val(out.boxes);
  const Tensor& reid = tape.val(out.reid);
  CHECK(logits.shape() == std::vector<int>{9});
  CHECK(boxes.shape() == std::vector<int>{9, 4});
  CHECK(reid.shape() == std::vector<int>{9, 8});
  CHECK(tape.val(out.hidden).shape() == std::vector<int>{9, 16});
  for (int64_t i = 0; i < boxes.size(); ++i) {
    CHECK(boxes[i] > 0.0);
    CHECK(boxes[i] < 1.0);
  }
  for (int i = 0; i < reid.rows(); ++i) {
    double n2 = 0;
    for (int j = 0; j < reid.cols(); ++j) n2 += reid.at(i, j) * reid.at(i, j);
    CHECK(std::abs(std::sqrt(n2) - 1.0) <= 1e-6);
  }

  // zero-initialized box deltas: boxes stay on the learned reference grid
  for (int i = 0; i < 9; ++i) {
    CHECK(boxes.at(i, 0) == doctest::Approx((i % 3 + 0.5) / 3).epsilon(1e-9));
    CHECK(boxes.at(i, 1) == doctest::Approx((i / 3 + 0.5) / 3).epsilon(1e-9));
    CHECK(boxes.at(i, 2) == doctest::Approx(0.2).epsilon(1e-9));
    CHECK(boxes.at(i, 3) == doctest::Approx(0.2).epsilon(1e-9));
  }

  ad::Var short_frame = tape.leaf(rand_tensor({g.rows - 1, c}, rng));
  CHECK_THROWS_AS(decode_frame(tape, bind, short_frame, g, dcfg, heads),
                  InvalidInputError);
}
