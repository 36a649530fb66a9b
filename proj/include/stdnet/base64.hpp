// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stdnet {

// Standard base64 (RFC 4648, with padding). decode throws InvalidInputError
// on characters outside the alphabet or bad padding.
std::string base64_encode(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> base64_decode(const std::string& text);

}  // namespace stdnet
