#pragma once

#include <stdexcept>
#include <string>

namespace gemino {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension, channel-count or other precondition mismatch on in-memory data.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated external data: weight files, bitstreams, packets,
/// raw video, CSV traces.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Missing or contradictory operator options.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace gemino
