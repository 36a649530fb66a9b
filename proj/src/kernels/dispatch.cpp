// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]

#include <cstdlib>
#include <cstring>
#include <string>

#include "stdnet/errors.hpp"
#include "stdnet/kernels.hpp"

namespace stdnet::kernels {

void deform_head_scalar(const double*, int, const DeformCell*, const int*, int,
                        const double*, const double*, int, int, double*);
void gemm_scalar(const double*, const double*, double*, int, int, int);
void mask_counts_scalar(const uint8_t*, const uint8_t*, size_t, uint64_t*,
                        uint64_t*);

#if defined(__x86_64__) || defined(_M_X64)
void deform_head_avx2(const double*, int, const DeformCell*, const int*, int,
                      const double*, const double*, int, int, double*);
void gemm_avx2(const double*, const double*, double*, int, int, int);
void mask_counts_avx2(const uint8_t*, const uint8_t*, size_t, uint64_t*,
                      uint64_t*);
#endif
#if defined(__aarch64__)
void deform_head_neon(const double*, int, const DeformCell*, const int*, int,
                      const double*, const double*, int, int, double*);
void gemm_neon(const double*, const double*, double*, int, int, int);
void mask_counts_neon(const uint8_t*, const uint8_t*, size_t, uint64_t*,
                      uint64_t*);
#endif

bool variant_available(Variant v) {
  switch (v) {
    case Variant::scalar:
      return true;
    case Variant::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2") != 0;
#else
      return false;
#endif
    case Variant::neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::scalar:
      return "scalar";
    case Variant::avx2:
      return "avx2";
    case Variant::neon:
      return "neon";
  }
  return "?";
}

namespace {

Variant pick_variant() {
  if (const char* env = std::getenv("STDNET_KERNEL")) {
    if (std::strcmp(env, "scalar") == 0) return Variant::scalar;
    if (std::strcmp(env, "avx2") == 0) {
      if (!variant_available(Variant::avx2))
        throw ConfigError("STDNET_KERNEL=avx2 but AVX2 is not available");
      return Variant::avx2;
    }
    if (std::strcmp(env, "neon") == 0) {
      if (!variant_available(Variant::neon))
        throw ConfigError("STDNET_KERNEL=neon but NEON is not available");
      return Variant::neon;
    }
    throw ConfigError(std::string("unknown STDNET_KERNEL value: ") + env);
  }
  if (variant_available(Variant::avx2)) return Variant::avx2;
  if (variant_available(Variant::neon)) return Variant::neon;
  return Variant::scalar;
}

}  // namespace

Variant active_variant() {
  static const Variant v = pick_variant();
  return v;
}

DeformHeadFn deform_head_variant(Variant v) {
  switch (v) {
    case Variant::scalar:
      return &deform_head_scalar;
    case Variant::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return variant_available(v) ? &deform_head_avx2 : nullptr;
#else
      return nullptr;
#endif
    case Variant::neon:
#if defined(__aarch64__)
      return &deform_head_neon;
#else
      return nullptr;
#endif
  }
  return nullptr;
}

GemmFn gemm_variant(Variant v) {
  switch (v) {
    case Variant::scalar:
      return &gemm_scalar;
    case Variant::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return variant_available(v) ? &gemm_avx2 : nullptr;
#else
      return nullptr;
#endif
    case Variant::neon:
#if defined(__aarch64__)
      return &gemm_neon;
#else
      return nullptr;
#endif
  }
  return nullptr;
}

MaskCountFn mask_counts_variant(Variant v) {
  switch (v) {
    case Variant::scalar:
      return &mask_counts_scalar;
    case Variant::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return variant_available(v) ? &mask_counts_avx2 : nullptr;
#else
      return nullptr;
#endif
    case Variant::neon:
#if defined(__aarch64__)
      return &mask_counts_neon;
#else
      return nullptr;
#endif
  }
  return nullptr;
}

void deform_head(const double* value, int value_cols, const DeformCell* cells,
                 const int* cell_of_slot, int num_slots, const double* locs,
                 const double* wts, int c0, int n, double* out) {
  static const DeformHeadFn fn = deform_head_variant(active_variant());
  fn(value, value_cols, cells, cell_of_slot, num_slots, locs, wts, c0, n, out);
}

void gemm(const double* a, const double* b, double* c, int n, int k, int m) {
  static const GemmFn fn = gemm_variant(active_variant());
  fn(a, b, c, n, k, m);
}

void mask_counts(const uint8_t* a, const uint8_t* b, size_t n, uint64_t* inter,
                 uint64_t* uni) {
  static const MaskCountFn fn = mask_counts_variant(active_variant());
  fn(a, b, n, inter, uni);
}

}  // namespace stdnet::kernels
