// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#pragma once

#include <stdexcept>
#include <string>

namespace stdnet {

// Invalid values fed to an operation (degenerate boxes, shape mismatches, ...).
struct InvalidInputError : std::runtime_error {
  explicit InvalidInputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Inconsistent or out-of-range configuration.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// More ground-truth objects than queries, or similar capacity violations.
struct CapacityError : std::runtime_error {
  explicit CapacityError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing or corrupt on-disk artifacts; message names the offending path.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Network-level failure talking to a remote segmenter (after retries).
struct TransportError : std::runtime_error {
  explicit TransportError(const std::string& msg) : std::runtime_error(msg) {}
};

// Response arrived but does not follow the wire protocol.
struct ProtocolError : std::runtime_error {
  explicit ProtocolError(const std::string& msg) : std::runtime_error(msg) {}
};

// Remote segmenter answered with a non-2xx status.
struct ServiceError : std::runtime_error {
  ServiceError(int status, const std::string& msg)
      : std::runtime_error(msg), status_code(status) {}
  int status_code;
};

}  // namespace stdnet
