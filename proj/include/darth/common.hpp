// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace darth {

using idx_t = std::uint32_t;

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller passed an argument outside an operation's precondition.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// On-disk bytes or text did not match the expected layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Input values are well-formed but unusable (non-finite features etc).
class DataError : public Error {
 public:
  using Error::Error;
};

/// An object was queried in a state that does not support the request.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Missing or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A requested target could not be reached with the supplied search space.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// (distance, id) pair. Ordering is lexicographic so that ties on distance
/// always resolve to the lower id.
struct Neighbor {
  float dist = 0.0f;
  idx_t id = 0;

  friend constexpr bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.dist < b.dist || (a.dist == b.dist && a.id < b.id);
  }
  friend constexpr bool operator>(const Neighbor& a, const Neighbor& b) { return b < a; }
  friend constexpr bool operator==(const Neighbor& a, const Neighbor& b) = default;
};

}  // namespace darth
