// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

// Arithmetic inner loops used by the attention forward path, the dense layers
// and the mask metrics. Each kernel has a scalar reference implementation and
// SIMD variants (AVX2 on x86-64, NEON on aarch64) selected once at runtime.
// All variants are written so that the floating-point operation order per
// output element is identical; the equivalence suite asserts bitwise equality
// against the scalar reference.

namespace stdnet::kernels {

enum class Variant { scalar, avx2, neon };

// One flattened feature grid: rows [row0, row0 + h*w) of a [R, C] value
// matrix, laid out row-major (y * w + x).
struct DeformCell {
  int row0 = 0;
  int h = 0;
  int w = 0;
};

// Deformable-attention aggregation for one query and one head:
//   out[c] = sum_p wts[p] * bilinear(value, cell_of_slot[p], locs[2p..2p+1])[c0 + c]
// for c in [0, n). Integer coordinates address texel centers; samples outside
// a grid contribute zero.
using DeformHeadFn = void (*)(const double* value, int value_cols,
                              const DeformCell* cells, const int* cell_of_slot,
                              int num_slots, const double* locs,
                              const double* wts, int c0, int n, double* out);

// Dense c = a * b with a [n,k], b [k,m], c [n,m]; c is overwritten.
using GemmFn = void (*)(const double* a, const double* b, double* c, int n,
                        int k, int m);

// Counts of set pixels in a&b and a|b over n bytes of {0,1} masks.
using MaskCountFn = void (*)(const uint8_t* a, const uint8_t* b, size_t n,
                             uint64_t* inter, uint64_t* uni);

// Active variant, chosen once per process: STDNET_KERNEL env override
// (scalar|avx2|neon) if set, otherwise the best the CPU supports.
Variant active_variant();
const char* variant_name(Variant v);
bool variant_available(Variant v);

// Call through the active variant.
void deform_head(const double* value, int value_cols, const DeformCell* cells,
                 const int* cell_of_slot, int num_slots, const double* locs,
                 const double* wts, int c0, int n, double* out);
void gemm(const double* a, const double* b, double* c, int n, int k, int m);
void mask_counts(const uint8_t* a, const uint8_t* b, size_t n, uint64_t* inter,
                 uint64_t* uni);

// Direct per-variant access for the equivalence tests. Null when the variant
// is not compiled in or not runnable on this CPU.
DeformHeadFn deform_head_variant(Variant v);
GemmFn gemm_variant(Variant v);
MaskCountFn mask_counts_variant(Variant v);

}  // namespace stdnet::kernels
