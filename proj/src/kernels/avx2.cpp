// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
//
// AVX2 kernels. This translation unit is built with -mavx2 (and without
// -mfma: separate mul+add keeps results bit-identical to the scalar
// reference). Only reached through the runtime dispatcher.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>

#include "stdnet/kernels.hpp"

namespace stdnet::kernels {

void deform_head_avx2(const double* value, int value_cols,
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

    const __m256d vc00 = _mm256_set1_pd(c00);
    const __m256d vc10 = _mm256_set1_pd(c10);
    const __m256d vc01 = _mm256_set1_pd(c01);
    const __m256d vc11 = _mm256_set1_pd(c11);
    const __m256d vw = _mm256_set1_pd(w);

    int c = 0;
    for (; c + 4 <= n; c += 4) {
      const __m256d t0 =
          _mm256_add_pd(_mm256_mul_pd(vc00, _mm256_loadu_pd(v00 + c)),
                        _mm256_mul_pd(vc10, _mm256_loadu_pd(v10 + c)));
      const __m256d t1 =
          _mm256_add_pd(_mm256_mul_pd(vc01, _mm256_loadu_pd(v01 + c)),
                        _mm256_mul_pd(vc11, _mm256_loadu_pd(v11 + c)));
      const __m256d s = _mm256_add_pd(t0, t1);
      const __m256d acc =
          _mm256_add_pd(_mm256_loadu_pd(out + c), _mm256_mul_pd(vw, s));
      _mm256_storeu_pd(out + c, acc);
    }
    for (; c < n; ++c) {
      const double s =
          (c00 * v00[c] + c10 * v10[c]) + (c01 * v01[c] + c11 * v11[c]);
      out[c] += w * s;
    }
  }
}

void gemm_avx2(const double* a, const double* b, double* c, int n, int k,
               int m) {
  for (int i = 0; i < n; ++i) {
    double* crow = c + size_t(i) * m;
    int j = 0;
    const __m256d zero = _mm256_setzero_pd();
    for (; j + 4 <= m; j += 4) _mm256_storeu_pd(crow + j, zero);
    for (; j < m; ++j) crow[j] = 0.0;

    const double* arow = a + size_t(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      const double* brow = b + size_t(kk) * m;
      const __m256d va = _mm256_set1_pd(aik);
      j = 0;
      for (; j + 4 <= m; j += 4) {
        const __m256d acc = _mm256_add_pd(
            _mm256_loadu_pd(crow + j),
            _mm256_mul_pd(va, _mm256_loadu_pd(brow + j)));
        _mm256_storeu_pd(crow + j, acc);
      }
      for (; j < m; ++j) crow[j] += aik * brow[j];
    }
  }
}

void mask_counts_avx2(const uint8_t* a, const uint8_t* b, size_t n,
                      uint64_t* inter, uint64_t* uni) {
  __m256i acc_i = _mm256_setzero_si256();
  __m256i acc_u = _mm256_setzero_si256();
  const __m256i zero = _mm256_setzero_si256();
  size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    const __m256i va =
        _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + i));
    const __m256i vb =
        _mm256_loadu_si256(reinterpret_cast<const __m256i*>(b + i));
    // Bytes are 0/1, so horizontal byte sums via SAD against zero are exact.
    acc_i = _mm256_add_epi64(acc_i,
                             _mm256_sad_epu8(_mm256_and_si256(va, vb), zero));
    acc_u = _mm256_add_epi64(acc_u,
                             _mm256_sad_epu8(_mm256_or_si256(va, vb), zero));
  }
  alignas(32) uint64_t lanes[4];
  uint64_t ci = 0, cu = 0;
  _mm256_store_si256(reinterpret_cast<__m256i*>(lanes), acc_i);
  ci = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  _mm256_store_si256(reinterpret_cast<__m256i*>(lanes), acc_u);
  cu = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < n; ++i) {
    ci += uint64_t(a[i] & b[i]);
    cu += uint64_t(a[i] | b[i]);
  }
  *inter = ci;
  *uni = cu;
}

}  // namespace stdnet::kernels

#endif  // x86-64
