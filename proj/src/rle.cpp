// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]

#include "stdnet/rle.hpp"

#include "stdnet/errors.hpp"

namespace stdnet {

std::vector<int64_t> rle_encode(const Mask& m) {
  if (m.h <= 0 || m.w <= 0) throw InvalidInputError("rle_encode: empty mask");
  std::vector<int64_t> counts;
  uint8_t cur = 0;  // runs start with zeros
  int64_t run = 0;
  for (int x = 0; x < m.w; ++x)
    for (int y = 0; y < m.h; ++y) {
      uint8_t px = m.at(y, x) ? 1 : 0;
      if (px == cur) {
        ++run;
      } else {
        counts.push_back(run);
        cur = px;
        run = 1;
      }
    }
  counts.push_back(run);
  return counts;
}

Mask rle_decode(const std::vector<int64_t>& counts, int h, int w) {
  if (h <= 0 || w <= 0) throw InvalidInputError("rle_decode: empty dims");
  Mask m(h, w);
  int64_t total = int64_t(h) * w, pos = 0;
  uint8_t cur = 0;
  for (int64_t c : counts) {
    if (c < 0) throw InvalidInputError("rle_decode: negative count");
    for (int64_t i = 0; i < c; ++i) {
      if (pos >= total) throw InvalidInputError("rle_decode: counts overrun");
      m.v[size_t((pos % h) * w + pos / h)] = cur;  // column-major scan
      ++pos;
    }
    cur = 1 - cur;
  }
  if (pos != total)
    throw InvalidInputError("rle_decode: counts sum to " + std::to_string(pos) +
                            ", expected " + std::to_string(total));
  return m;
}

}  // namespace stdnet
