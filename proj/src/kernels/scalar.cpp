// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
//
// Scalar reference kernels. These define the semantics; the SIMD variants
// must reproduce them bit for bit.

#include <cmath>
#include <cstring>

#include "stdnet/kernels.hpp"

namespace stdnet::kernels {

void deform_head_scalar(const double* value, int value_cols,
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

    // Zero-padding: out-of-grid corners get coefficient 0 and a clamped read
    // index so no memory outside the cell is touched.
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

    for (int c = 0; c < n; ++c) {
      const double s =
          (c00 * v00[c] + c10 * v10[c]) + (c01 * v01[c] + c11 * v11[c]);
      out[c] += w * s;
    }
  }
}

void gemm_scalar(const double* a, const double* b, double* c, int n, int k,
                 int m) {
  for (int i = 0; i < n; ++i) {
    double* crow = c + size_t(i) * m;
    for (int j = 0; j < m; ++j) crow[j] = 0.0;
    const double* arow = a + size_t(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      const double* brow = b + size_t(kk) * m;
      for (int j = 0; j < m; ++j) crow[j] += aik * brow[j];
    }
  }
}

void mask_counts_scalar(const uint8_t* a, const uint8_t* b, size_t n,
                        uint64_t* inter, uint64_t* uni) {
  uint64_t ci = 0, cu = 0;
  for (size_t i = 0; i < n; ++i) {
    ci += uint64_t(a[i] & b[i]);
    cu += uint64_t(a[i] | b[i]);
  }
  *inter = ci;
  *uni = cu;
}

}  // namespace stdnet::kernels
