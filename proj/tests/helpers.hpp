// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#pragma once

// Shared test utilities, most importantly a plain-loop re-implementation of
// multi-scale deformable attention used as the independent reference for the
// tape-based forward path.

#include <cmath>
#include <string>
#include <vector>

#include "stdnet/autodiff.hpp"
#include "stdnet/rng.hpp"
#include "stdnet/std_attention.hpp"
#include "stdnet/tensor.hpp"

namespace testutil {

inline stdnet::Tensor rand_tensor(std::vector<int> shape, stdnet::Rng& rng,
                                  double lo = -1.0, double hi = 1.0) {
  stdnet::Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Additive uniform noise on every parameter. Gradient checks use this to move
// zero-initialized offset/logit maps off their symmetric starting point.
inline void perturb_params(stdnet::ad::ParamStore& ps, stdnet::Rng& rng,
                           double scale) {
  for (auto& [name, t] : ps.all()) {
    (void)name;
    for (int64_t i = 0; i < t.size(); ++i) t[i] += rng.uniform(-scale, scale);
  }
}

inline stdnet::Tensor lin_ref(const stdnet::Tensor& x, const stdnet::Tensor& w,
                              const stdnet::Tensor& b) {
  stdnet::Tensor y({x.rows(), w.cols()});
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < w.cols(); ++j) {
      double acc = b[j];
      for (int k = 0; k < x.cols(); ++k) acc += x.at(i, k) * w.at(k, j);
      y.at(i, j) = acc;
    }
  return y;
}

// Creates the four projections a deformable-attention branch reads, all with
// random (non-zero) weights so the reference test exercises real offsets.
inline void make_branch_params(stdnet::ad::ParamStore& ps,
                               const std::string& prefix, int channels,
                               int heads, int slots, stdnet::Rng& rng) {
  auto make = [&](const std::string& base, int in, int out) {
    ps.create(base + ".w", rand_tensor({in, out}, rng, -0.3, 0.3));
    ps.create(base + ".b", rand_tensor({out}, rng, -0.1, 0.1));
  };
  make(prefix + ".val", channels, channels);
  make(prefix + ".off", channels, heads * slots * 2);
  make(prefix + ".att", channels, heads * slots);
  make(prefix + ".out", channels, channels);
}

// Loop reference for one deformable-attention branch. frames are the raw
// per-frame row matrices in clip order (one entry for the spatial branch);
// the slot order is (frame, level, point) and the value matrix is the value
// projection of each frame stacked in order, which also covers the spatial
// layout as the one-frame special case.
inline stdnet::Tensor msda_oracle(const stdnet::ad::ParamStore& ps,
                                  const std::string& prefix,
                                  const stdnet::Tensor& queries,
                                  const stdnet::Tensor& refs,
                                  const std::vector<stdnet::Tensor>& frames,
                                  const stdnet::EncoderGeometry& g, int heads,
                                  int k_points) {
  using stdnet::Tensor;
  const int n = queries.rows(), c = queries.cols();
  const int head_ch = c / heads;
  const int big_l = int(g.level_hw.size());
  const int j_frames = int(frames.size());
  const int slots = j_frames * big_l * k_points;

  std::vector<Tensor> value;
  for (const Tensor& f : frames)
    value.push_back(
        lin_ref(f, ps.get(prefix + ".val.w"), ps.get(prefix + ".val.b")));
  Tensor off =
      lin_ref(queries, ps.get(prefix + ".off.w"), ps.get(prefix + ".off.b"));
  Tensor att =
      lin_ref(queries, ps.get(prefix + ".att.w"), ps.get(prefix + ".att.b"));

  Tensor gathered({n, c});
  for (int i = 0; i < n; ++i) {
    for (int m = 0; m < heads; ++m) {
      // joint softmax over every slot of this head
      double mx = -1e300;
      for (int s = 0; s < slots; ++s)
        mx = std::max(mx, att.at(i, m * slots + s));
      double z = 0;
      std::vector<double> w(size_t(slots), 0.0);
      for (int s = 0; s < slots; ++s) {
        w[size_t(s)] = std::exp(att.at(i, m * slots + s) - mx);
        z += w[size_t(s)];
      }
      for (int s = 0; s < slots; ++s) w[size_t(s)] /= z;

      for (int s = 0; s < slots; ++s) {
        const int j = s / (big_l * k_points);
        const int l = (s / k_points) % big_l;
        auto [lh, lw] = g.level_hw[size_t(l)];
        const double x =
            refs.at(i, 0) * lw + off.at(i, (m * slots + s) * 2 + 0);
        const double y =
            refs.at(i, 1) * lh + off.at(i, (m * slots + s) * 2 + 1);
        const int x0 = int(std::floor(x)), y0 = int(std::floor(y));
        const double fx = x - x0, fy = y - y0;
        const double coef[4] = {(1 - fx) * (1 - fy), fx * (1 - fy),
                                (1 - fx) * fy, fx * fy};
        const int cx[4] = {x0, x0 + 1, x0, x0 + 1};
        const int cy[4] = {y0, y0, y0 + 1, y0 + 1};
        for (int corner = 0; corner < 4; ++corner) {
          if (cx[corner] < 0 || cx[corner] >= lw || cy[corner] < 0 ||
              cy[corner] >= lh)
            continue;
          const int row = g.row0[size_t(l)] + cy[corner] * lw + cx[corner];
          for (int ch = 0; ch < head_ch; ++ch)
            gathered.at(i, m * head_ch + ch) +=
                w[size_t(s)] * coef[corner] *
                value[size_t(j)].at(row, m * head_ch + ch);
        }
      }
    }
  }
  return lin_ref(gathered, ps.get(prefix + ".out.w"),
                 ps.get(prefix + ".out.b"));
}

inline double max_abs_diff(const stdnet::Tensor& a, const stdnet::Tensor& b) {
  if (!a.same_shape(b)) return 1e300;
  double m = 0;
  for (int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline bool bitwise_equal(const stdnet::Tensor& a, const stdnet::Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (int64_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace testutil
