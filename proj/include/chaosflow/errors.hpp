#pragma once

#include <stdexcept>

namespace chaosflow {

/// An operation would need wavevectors beyond the grid growth cap.
class GridOverflowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computed quantity violated a checked invariant (non-finite coefficient,
/// failed identity). The message names the invariant and its context.
class InvariantBreach : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace chaosflow
