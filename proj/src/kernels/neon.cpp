// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
//
// NEON kernels (aarch64: float64x2 is baseline, no extra compile flags).
// Mirrors the scalar reference op-for-op; vmulq/vaddq instead of fused
// multiply-add so results stay bit-identical.

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>

#include "stdnet/kernels.hpp"

namespace stdnet::kernels {

void deform_head_neon(const double* value, int value_cols,
                      const DeformCell* cells, const int* cell_of_slot,
                      int num_slots, const double* locs, const double* wts,
                      int c0, int n, double* out) {
  for (int c = 0; c < n; ++c) out[c] = 0.0;
  for (int p = 0; p < num_slots; ++p) {
    const DeformCell& cell = cells[cell_of_slot[p]];
    const double x = locs[2 * p];
    const double y = locs[2 * p + 1];
    const double w = wts[p];

    const int x0 = int(std::floor(x));
    const int y0 = int(std::floor(y));
    const double fx = x - x0;
    const double fy = y - y0;

    auto corner = [&](int xi, int yi, double coef, double& coef_out) -> const double* {
      if (xi < 0 || xi >= cell.w || yi < 0 || yi >= cell.h) {
        coef_out = 0.0;
        return value + size_t(cell.row0) * value_cols + c0;
      }
      coef_out = coef;
      return value + size_t(cell.row0 + yi * cell.w + xi) * value_cols + c0;
    };

    double c00, c10, c01, c11;
    const double* v00 = corner(x0, y0, (1.0 - fx) * (1.0 - fy), c00);
    const double* v10 = corner(x0 + 1, y0, fx * (1.0 - fy), c10);
    const double* v01 = corner(x0, y0 + 1, (1.0 - fx) * fy, c01);
    const double* v11 = corner(x0 + 1, y0 + 1, fx * fy, c11);

    const float64x2_t vc00 = vdupq_n_f64(c00);
    const float64x2_t vc10 = vdupq_n_f64(c10);
    const float64x2_t vc01 = vdupq_n_f64(c01);
    const float64x2_t vc11 = vdupq_n_f64(c11);
    const float64x2_t vw = vdupq_n_f64(w);

    int c = 0;
    for (; c + 2 <= n; c += 2) {
      const float64x2_t t0 = vaddq_f64(vmulq_f64(vc00, vld1q_f64(v00 + c)),
                                       vmulq_f64(vc10, vld1q_f64(v10 + c)));
      const float64x2_t t1 = vaddq_f64(vmulq_f64(vc01, vld1q_f64(v01 + c)),
                                       vmulq_f64(vc11, vld1q_f64(v11 + c)));
      const float64x2_t s = vaddq_f64(t0, t1);
      vst1q_f64(out + c, vaddq_f64(vld1q_f64(out + c), vmulq_f64(vw, s)));
    }
    for (; c < n; ++c) {
      const double s =
          (c00 * v00[c] + c10 * v10[c]) + (c01 * v01[c] + c11 * v11[c]);
      out[c] += w * s;
    }
  }
}

void gemm_neon(const double* a, const double* b, double* c, int n, int k,
               int m) {
  for (int i = 0; i < n; ++i) {
    double* crow = c + size_t(i) * m;
    for (int j = 0; j < m; ++j) crow[j] = 0.0;
    const double* arow = a + size_t(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      const double* brow = b + size_t(kk) * m;
      const float64x2_t va = vdupq_n_f64(aik);
      int j = 0;
      for (; j + 2 <= m; j += 2) {
        vst1q_f64(crow + j, vaddq_f64(vld1q_f64(crow + j),
                                      vmulq_f64(va, vld1q_f64(brow + j))));
      }
      for (; j < m; ++j) crow[j] += aik * brow[j];
    }
  }
}

void mask_counts_neon(const uint8_t* a, const uint8_t* b, size_t n,
                      uint64_t* inter, uint64_t* uni) {
  uint64_t ci = 0, cu = 0;
  size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const uint8x16_t va = vld1q_u8(a + i);
    const uint8x16_t vb = vld1q_u8(b + i);
    // Bytes are 0/1: a 16-byte horizontal add cannot overflow any lane.
    ci += vaddvq_u8(vandq_u8(va, vb));
    cu += vaddvq_u8(vorrq_u8(va, vb));
  }
  for (; i < n; ++i) {
    ci += uint64_t(a[i] & b[i]);
    cu += uint64_t(a[i] | b[i]);
  }
  *inter = ci;
  *uni = cu;
}

}  // namespace stdnet::kernels

#endif  // __aarch64__
