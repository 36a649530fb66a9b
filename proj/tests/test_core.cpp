// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <vector>

#include "stdnet/autodiff.hpp"
#include "stdnet/base64.hpp"
#include "stdnet/errors.hpp"
#include "stdnet/geometry.hpp"
#include "stdnet/image.hpp"
#include "stdnet/kernels.hpp"
#include "stdnet/rle.hpp"
#include "stdnet/rng.hpp"
#include "stdnet/tensor.hpp"

using namespace stdnet;

namespace {

Tensor rand_tensor(std::vector<int> shape, Rng& rng, double lo = -1,
                   double hi = 1) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Max relative error between backward() gradients and central differences,
// over every element of every input.
double grad_max_rel_err(
    const std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>& f,
    const std::vector<Tensor>& inputs, double h = 1e-6) {
  auto eval = [&](const std::vector<Tensor>& xs) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const Tensor& x : xs) vars.push_back(tape.leaf(x));
    return tape.val(f(tape, vars))[0];
  };

  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const Tensor& x : inputs) vars.push_back(tape.leaf(x));
  ad::Var y = f(tape, vars);
  REQUIRE(tape.val(y).size() == 1);
  tape.backward(y);

  double worst = 0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    const Tensor& g = tape.grad(vars[i]);
    for (int64_t j = 0; j < inputs[i].size(); ++j) {
      std::vector<Tensor> xs = inputs;
      xs[i][j] += h;
      double up = eval(xs);
      xs[i][j] -= 2 * h;
      double dn = eval(xs);
      double fd = (up - dn) / (2 * h);
      double rel = std::abs(fd - g[j]) / std::max(1e-6, std::abs(fd) +
                                                            std::abs(g[j]));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

std::filesystem::path temp_dir(const char* tag) {
  auto p = std::filesystem::temp_directory_path() /
           (std::string("stdnet_") + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("tensor shapes and access") {
  Tensor t({2, 3});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.size() == 6);
  t.at(1, 2) = 5.0;
  CHECK(t[5] == 5.0);
  CHECK(Tensor::full({2, 2}, 3.0)[3] == 3.0);
  CHECK(Tensor::scalar(7.0).size() == 1);
  Tensor r = t.reshaped({3, 2});
  CHECK(r.at(2, 1) == 5.0);
  CHECK_THROWS_AS(t.reshaped({4, 2}), std::invalid_argument);
}

TEST_CASE("kernel variants agree bitwise with the scalar reference") {
  Rng rng(99);
  using namespace stdnet::kernels;

  std::vector<Variant> others;
  for (Variant v : {Variant::avx2, Variant::neon}) {
    if (variant_available(v)) others.push_back(v);
  }
  INFO("active variant: ", variant_name(active_variant()));

  for (int trial = 0; trial < 20; ++trial) {
    int n = rng.uniform_int(1, 7), k = rng.uniform_int(1, 9),
        m = rng.uniform_int(1, 8);
    Tensor a = rand_tensor({n, k}, rng), b = rand_tensor({k, m}, rng);
    Tensor ref({n, m}), got({n, m});
    gemm_variant(Variant::scalar)(a.data(), b.data(), ref.data(), n, k, m);
    for (Variant v : others) {
      gemm_variant(v)(a.data(), b.data(), got.data(), n, k, m);
      for (int64_t i = 0; i < ref.size(); ++i) CHECK(ref[i] == got[i]);
    }
    gemm(a.data(), b.data(), got.data(), n, k, m);  // dispatched
    for (int64_t i = 0; i < ref.size(); ++i) CHECK(ref[i] == got[i]);
  }

  for (int trial = 0; trial < 20; ++trial) {
    // Two stacked 4x5 and 2x3 grids, 8 value columns, 2 heads.
    std::vector<DeformCell> cells = {{0, 4, 5}, {20, 2, 3}};
    int slots = 6, head_ch = 4;
    Tensor value = rand_tensor({26, 8}, rng);
    std::vector<int> cell_of_slot;
    Tensor locs({slots, 2}), wts({slots});
    for (int s = 0; s < slots; ++s) {
      cell_of_slot.push_back(s % 2);
      // include clearly out-of-grid points to cover the zero-pad path
      locs.at(s, 0) = rng.uniform(-2.0, 7.0);
      locs.at(s, 1) = rng.uniform(-2.0, 6.0);
      wts[s] = rng.uniform(0.0, 1.0);
    }
    Tensor ref({head_ch}), got({head_ch});
    deform_head_variant(Variant::scalar)(value.data(), 8, cells.data(),
                                         cell_of_slot.data(), slots,
                                         locs.data(), wts.data(), 4, head_ch,
                                         ref.data());
    for (Variant v : others) {
      deform_head_variant(v)(value.data(), 8, cells.data(),
                             cell_of_slot.data(), slots, locs.data(),
                             wts.data(), 4, head_ch, got.data());
      for (int c = 0; c < head_ch; ++c) CHECK(ref[c] == got[c]);
    }
  }

  for (int trial = 0; trial < 10; ++trial) {
    size_t n = size_t(rng.uniform_int(1, 300));
    std::vector<uint8_t> a(n), b(n);
    for (size_t i = 0; i < n; ++i) {
      a[i] = uint8_t(rng.uniform_int(0, 1));
      b[i] = uint8_t(rng.uniform_int(0, 1));
    }
    uint64_t ri, ru, gi, gu;
    mask_counts_variant(Variant::scalar)(a.data(), b.data(), n, &ri, &ru);
    for (Variant v : others) {
      mask_counts_variant(v)(a.data(), b.data(), n, &gi, &gu);
      CHECK(ri == gi);
      CHECK(ru == gu);
    }
    mask_counts(a.data(), b.data(), n, &gi, &gu);
    CHECK(ri == gi);
    CHECK(ru == gu);
  }
}

TEST_CASE("autodiff elementwise and reduction gradients") {
  Rng rng(7);
  auto check1 = [&](const char* name,
                    const std::function<ad::Var(ad::Tape&, ad::Var)>& op,
                    Tensor x) {
    double e = grad_max_rel_err(
        [&](ad::Tape& t, const std::vector<ad::Var>& v) {
          return t.mean(op(t, v[0]));
        },
        {x});
    INFO("op: ", name);
    CHECK(e < 1e-4);
  };

  Tensor x = rand_tensor({3, 4}, rng);
  Tensor pos = rand_tensor({3, 4}, rng, 0.2, 2.0);
  Tensor unit = rand_tensor({3, 4}, rng, 0.05, 0.95);

  check1("neg", [](ad::Tape& t, ad::Var a) { return t.neg(a); }, x);
  check1("exp", [](ad::Tape& t, ad::Var a) { return t.exp(a); }, x);
  check1("log", [](ad::Tape& t, ad::Var a) { return t.log(a); }, pos);
  check1("sqrt", [](ad::Tape& t, ad::Var a) { return t.sqrt(a); }, pos);
  check1("abs", [](ad::Tape& t, ad::Var a) { return t.abs(a); }, pos);
  check1("relu", [](ad::Tape& t, ad::Var a) { return t.relu(a); }, pos);
  check1("sigmoid", [](ad::Tape& t, ad::Var a) { return t.sigmoid(a); }, x);
  check1("logit", [](ad::Tape& t, ad::Var a) { return t.logit(a); }, unit);
  check1("affine", [](ad::Tape& t, ad::Var a) { return t.affine(a, 2.5, -1); },
         x);
  check1("sum", [](ad::Tape& t, ad::Var a) { return t.sum(a); }, x);
  check1("mean_rows",
         [](ad::Tape& t, ad::Var a) { return t.mean_rows(a); }, x);
  check1("logsumexp_rows",
         [](ad::Tape& t, ad::Var a) { return t.logsumexp_rows(a); }, x);
  check1("softmax_rows",
         [](ad::Tape& t, ad::Var a) { return t.softmax_rows(a); }, x);
  check1("l2_normalize_rows",
         [](ad::Tape& t, ad::Var a) { return t.l2_normalize_rows(a); }, x);

  // binary ops, both arguments
  Tensor y = rand_tensor({3, 4}, rng, 0.5, 1.5);
  for (auto [name, op] :
       std::vector<std::pair<const char*,
                             std::function<ad::Var(ad::Tape&, ad::Var,
                                                   ad::Var)>>>{
           {"add", [](ad::Tape& t, ad::Var a, ad::Var b) {
              return t.add(a, b);
            }},
           {"sub", [](ad::Tape& t, ad::Var a, ad::Var b) {
              return t.sub(a, b);
            }},
           {"mul", [](ad::Tape& t, ad::Var a, ad::Var b) {
              return t.mul(a, b);
            }},
           {"div", [](ad::Tape& t, ad::Var a, ad::Var b) {
              return t.div(a, b);
            }},
           {"minimum", [](ad::Tape& t, ad::Var a, ad::Var b) {
              return t.minimum(a, b);
            }},
           {"maximum", [](ad::Tape& t, ad::Var a, ad::Var b) {
              return t.maximum(a, b);
            }}}) {
    double e = grad_max_rel_err(
        [&](ad::Tape& t, const std::vector<ad::Var>& v) {
          return t.mean(op(t, v[0], v[1]));
        },
        {x, y});
    INFO("op: ", name);
    CHECK(e < 1e-4);
  }
}

TEST_CASE("autodiff shape, indexing and linear algebra gradients") {
  Rng rng(13);
  Tensor a = rand_tensor({3, 4}, rng), b = rand_tensor({4, 5}, rng);
  Tensor bt = rand_tensor({5, 4}, rng), v4 = rand_tensor({4}, rng);
  Tensor chw = rand_tensor({2, 3, 4}, rng);
  Tensor mix = rand_tensor({3, 5}, rng);

  CHECK(grad_max_rel_err(
            [&](ad::Tape& t, const std::vector<ad::Var>& v) {
              return t.mean(t.mul(t.matmul(v[0], v[1]), v[2]));
            },
            {a, b, mix}) < 1e-4);
  CHECK(grad_max_rel_err(
            [&](ad::Tape& t, const std::vector<ad::Var>& v) {
              return t.mean(t.mul(t.matmul_nt(v[0], v[1]), v[2]));
            },
            {a, bt, mix}) < 1e-4);
  CHECK(grad_max_rel_err(
            [&](ad::Tape& t, const std::vector<ad::Var>& v) {
              return t.mean(t.add_rowvec(v[0], v[1]));
            },
            {a, v4}) < 1e-4);
  CHECK(grad_max_rel_err(
            [&](ad::Tape& t, const std::vector<ad::Var>& v) {
              return t.mean(t.mul_rowvec(v[0], v[1]));
            },
            {a, v4}) < 1e-4);
  CHECK(grad_max_rel_err(
            [&](ad::Tape& t, const std::vector<ad::Var>& v) {
              return t.mean(t.linear(v[0], v[1], v[2]));
            },
            {a, b, rand_tensor({5}, rng)}) < 1e-4);
  CHECK(grad_max_rel_err(
            [&](ad::Tape& t, const std::vector<ad::Var>& v) {
              return t.mean(t.reshape(v[0], {4, 3}));
            },
            {a}) < 1e-4);
  CHECK(grad_max_rel_err(
            [&](ad::Tape& t, const std::vector<ad::Var>& v) {
              return t.mean(t.slice_rows(v[0], 1, 3));
            },
            {a}) < 1e-4);
  CHECK(grad_max_rel_err(
            [&](ad::Tape& t, const std::vector<ad::Var>& v) {
              return t.mean(t.slice_cols(v[0], 1, 4));
            },
            {a}) < 1e-4);
  CHECK(grad_max_rel_err(
            [&](ad::Tape& t, const std::vector<ad::Var>& v) {
              return t.mean(t.concat_rows({v[0], v[1]}));
            },
            {a, rand_tensor({2, 4}, rng)}) < 1e-4);
  CHECK(grad_max_rel_err(
            [&](ad::Tape& t, const std::vector<ad::Var>& v) {
              return t.mean(t.concat_cols({v[0], v[1]}));
            },
            {a, rand_tensor({3, 2}, rng)}) < 1e-4);
  CHECK(grad_max_rel_err(
            [&](ad::Tape& t, const std::vector<ad::Var>& v) {
              // duplicate indices must accumulate
              return t.mean(t.gather_rows(v[0], {0, 2, 2, 1}));
            },
            {a}) < 1e-4);
  CHECK(grad_max_rel_err(
            [&](ad::Tape& t, const std::vector<ad::Var>& v) {
              return t.mean(t.gather_flat(v[0], {0, 5, 5, 11}));
            },
            {a}) < 1e-4);
  CHECK(grad_max_rel_err(
            [&](ad::Tape& t, const std::vector<ad::Var>& v) {
              return t.mean(t.chw_to_rows(v[0]));
            },
            {chw}) < 1e-4);
}

TEST_CASE("autodiff neural block gradients") {
  Rng rng(17);
  Tensor x = rand_tensor({4, 6}, rng);
  Tensor gamma = rand_tensor({6}, rng, 0.5, 1.5);
  Tensor beta = rand_tensor({6}, rng);
  CHECK(grad_max_rel_err(
            [&](ad::Tape& t, const std::vector<ad::Var>& v) {
              return t.mean(t.layernorm(v[0], v[1], v[2]));
            },
            {x, gamma, beta}) < 1e-4);

  Tensor img = rand_tensor({2, 5, 6}, rng);
  Tensor w = rand_tensor({3, 2, 3, 3}, rng);
  Tensor bias = rand_tensor({3}, rng);
  CHECK(grad_max_rel_err(
            [&](ad::Tape& t, const std::vector<ad::Var>& v) {
              return t.mean(t.conv2d(v[0], v[1], v[2], 2, 1));
            },
            {img, w, bias}) < 1e-4);

  // focal loss: gamma = 0 with alpha sentinel is plain BCE
  Tensor logits = rand_tensor({5}, rng, -2, 2);
  Tensor targets({5});
  for (int i = 0; i < 5; ++i) targets[i] = i % 2;
  CHECK(grad_max_rel_err(
            [&](ad::Tape& t, const std::vector<ad::Var>& v) {
              return t.focal_loss_binary(v[0], targets, 0.25, 2.0);
            },
            {logits}) < 1e-4);

  ad::Tape tape;
  ad::Var l = tape.leaf(logits);
  double focal0 = tape.val(tape.focal_loss_binary(l, targets, -1.0, 0.0))[0];
  double bce = 0;
  for (int i = 0; i < 5; ++i) {
    double p = 1.0 / (1.0 + std::exp(-logits[i]));
    bce += targets[i] ? -std::log(p) : -std::log(1 - p);
  }
  bce /= 5;
  CHECK(std::abs(focal0 - bce) < 1e-10);
}

TEST_CASE("ms_deform_sample gradients away from bilinear kinks") {
  Rng rng(23);
  std::vector<kernels::DeformCell> cells = {{0, 3, 4}, {12, 2, 2}};
  std::vector<int> cell_of_slot = {0, 0, 1};
  int nq = 2, heads = 2, head_ch = 2, slots = 3;
  Tensor value = rand_tensor({16, heads * head_ch}, rng);
  Tensor locs({nq * heads * slots, 2});
  Tensor wts({nq * heads * slots});
  for (int r = 0; r < locs.rows(); ++r) {
    // fractional parts well inside (0,1) so the FD step cannot cross a cell
    locs.at(r, 0) = rng.uniform_int(0, 2) + rng.uniform(0.3, 0.7);
    locs.at(r, 1) = rng.uniform_int(0, 1) + rng.uniform(0.3, 0.7);
    wts[r] = rng.uniform(0.1, 1.0);
  }
  CHECK(grad_max_rel_err(
            [&](ad::Tape& t, const std::vector<ad::Var>& v) {
              return t.mean(t.ms_deform_sample(v[0], v[1], v[2], cells,
                                               cell_of_slot, nq, heads,
                                               head_ch));
            },
            {value, locs, wts}) < 1e-4);
}

TEST_CASE("base64 known vectors and round-trip") {
  auto enc = [](const std::string& s) {
    return base64_encode(std::vector<uint8_t>(s.begin(), s.end()));
  };
  CHECK(enc("") == "");
  CHECK(enc("f") == "Zg==");
  CHECK(enc("fo") == "Zm8=");
  CHECK(enc("foo") == "Zm9v");
  CHECK(enc("foob") == "Zm9vYg==");
  CHECK(enc("fooba") == "Zm9vYmE=");
  CHECK(enc("foobar") == "Zm9vYmFy");

  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<uint8_t> bytes(size_t(rng.uniform_int(0, 100)));
    for (auto& b : bytes) b = uint8_t(rng.uniform_int(0, 255));
    CHECK(base64_decode(base64_encode(bytes)) == bytes);
  }
  CHECK_THROWS_AS(base64_decode("Zg=!"), InvalidInputError);
  CHECK_THROWS_AS(base64_decode("Z"), InvalidInputError);
}

TEST_CASE("rle encoding is column-major with a leading zero count") {
  Mask m(2, 2);
  CHECK(rle_encode(m) == std::vector<int64_t>{4});
  m.v = {1, 1, 1, 1};
  CHECK(rle_encode(m) == std::vector<int64_t>{0, 4});
  // single set pixel at (y=1, x=0): column-major index x*H + y = 1
  Mask s(2, 2);
  s.at(1, 0) = 1;
  CHECK(rle_encode(s) == std::vector<int64_t>{1, 1, 2});

  Rng rng(37);
  for (int trial = 0; trial < 50; ++trial) {
    int h = rng.uniform_int(1, 9), w = rng.uniform_int(1, 9);
    Mask r(h, w);
    for (auto& px : r.v) px = uint8_t(rng.uniform_int(0, 1));
    CHECK(rle_decode(rle_encode(r), h, w) == r);
  }
  CHECK_THROWS_AS(rle_decode({3}, 2, 2), InvalidInputError);
  CHECK_THROWS_AS(rle_decode({-1, 5}, 2, 2), InvalidInputError);
}

TEST_CASE("png round-trips for images and masks") {
  auto dir = temp_dir("core_png");
  Rng rng(41);
  Image img(9, 7);
  for (auto& b : img.rgb) b = uint8_t(rng.uniform_int(0, 255));
  write_png((dir / "img.png").string(), img);
  CHECK(read_png_image((dir / "img.png").string()) == img);
  CHECK(decode_png(encode_png(img)) == img);

  Mask m(5, 6);
  for (auto& px : m.v) px = uint8_t(rng.uniform_int(0, 1));
  write_png((dir / "m.png").string(), m);
  CHECK(read_png_mask((dir / "m.png").string()) == m);

  CHECK_THROWS_AS(read_png_image((dir / "absent.png").string()), FormatError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("box arithmetic") {
  Box a = Box::from_corners(0, 0, 0.5, 1);
  Box b = Box::from_corners(0.25, 0, 0.75, 1);
  CHECK(iou(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(iou(a, b) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(iou(a, Box::from_corners(0.6, 0, 1, 1)) == 0.0);
  CHECK(giou(a, a) == doctest::Approx(1.0));
  // disjoint: giou = -hull gap fraction
  Box c = Box::from_corners(0, 0, 0.2, 1), d = Box::from_corners(0.8, 0, 1, 1);
  CHECK(giou(c, d) == doctest::Approx(0.0 - 0.6 / 1.0));
  CHECK(box_loss(a, a, 5.0, 2.0) == doctest::Approx(0.0));
  CHECK_THROWS_AS(Box::from_corners(0.5, 0, 0.2, 1), InvalidInputError);

  CHECK(box_to_pixels(Box::from_corners(0, 0, 0.5, 0.5), 4, 4) ==
        PixelBox{0, 0, 2, 2});
  PixelBox pb{1, 2, 3, 4};
  Box back = box_from_pixels(pb, 8, 8);
  CHECK(box_to_pixels(back, 8, 8) == pb);
  CHECK_THROWS_AS(box_from_pixels(PixelBox{}, 8, 8), InvalidInputError);
}

TEST_CASE("mask tight boxes and box rasterization") {
  Mask m(6, 8);
  CHECK(tight_box(m) == PixelBox{});
  m.at(2, 3) = 1;
  m.at(4, 5) = 1;
  CHECK(tight_box(m) == PixelBox{3, 2, 6, 5});

  Mask r = rasterize_box(PixelBox{1, 1, 3, 2}, 4, 4);
  CHECK(r.count() == 2);
  CHECK(r.at(1, 1) == 1);
  CHECK(r.at(1, 2) == 1);
  CHECK(tight_box(r) == PixelBox{1, 1, 3, 2});
  // clips to the frame
  CHECK(rasterize_box(PixelBox{-5, -5, 100, 100}, 3, 3).count() == 9);
}
