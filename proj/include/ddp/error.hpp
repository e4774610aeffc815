// Copyright 2026 the ddparse authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace ddp {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input data (corpus lines, wire payloads, structured outputs).
struct ParseError : Error {
  using Error::Error;
};

// Bad configuration or argument values.
struct ConfigError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// Network failure that persisted through the retry budget.
struct TransportError : Error {
  using Error::Error;
};

// The endpoint does not implement the requested operation.
struct CapabilityError : Error {
  using Error::Error;
};

// A mock scorer was asked for something its script does not cover.
struct ScriptError : Error {
  using Error::Error;
};

}  // namespace ddp
