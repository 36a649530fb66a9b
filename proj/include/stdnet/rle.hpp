// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#pragma once

#include <cstdint>
#include <vector>

#include "stdnet/image.hpp"

namespace stdnet {

// Run-length encoding of binary masks in the COCO convention: pixels are
// scanned column-major (index = x*H + y), counts alternate runs of 0s and 1s,
// and the first count is the length of the leading zero run (0 when the mask
// starts with a 1). sum(counts) == H*W. See docs/formats.md for the
// bit-exact definition.
std::vector<int64_t> rle_encode(const Mask& m);

// Throws InvalidInputError when counts are negative or do not sum to h*w.
Mask rle_decode(const std::vector<int64_t>& counts, int h, int w);

}  // namespace stdnet
