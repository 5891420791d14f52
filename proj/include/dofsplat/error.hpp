// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dofsplat {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// An input violates a documented invariant (non-unit quaternion, bad shape, ...).
class ValidationError : public Error {
  public:
    using Error::Error;
};

/// A math routine was called outside its domain (f <= F, z <= 0, ...).
class DomainError : public Error {
  public:
    using Error::Error;
};

/// An operation was called in the wrong state (backward without forward, ...).
class StateError : public Error {
  public:
    using Error::Error;
};

/// A file could not be parsed. Carries the byte offset where parsing failed when known.
class FormatError : public Error {
  public:
    FormatError(const std::string &what, std::size_t offset = npos)
        : Error(offset == npos ? what : what + " (at byte offset " + std::to_string(offset) + ")"),
          mOffset(offset) {}

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    std::size_t
    offset() const {
        return mOffset;
    }

  private:
    std::size_t mOffset;
};

/// Training diverged (NaN/Inf loss or gradient).
class TrainingError : public Error {
  public:
    using Error::Error;
};

} // namespace dofsplat
