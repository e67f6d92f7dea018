// Copyright 2026 The wrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace wrag {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller passed an argument outside an operation's domain.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Input data is malformed or violates a record invariant.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage needs an artifact an earlier stage has not produced.
class MissingArtifact : public Error {
 public:
  using Error::Error;
};

/// Talking to a remote model endpoint failed (after retries).
class TransportError : public Error {
 public:
  using Error::Error;
};

/// A numeric kernel produced or received a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace wrag
