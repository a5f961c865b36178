#pragma once

#include <stdexcept>
#include <string>

namespace sgnn {

// Bad input data, flags or files. Maps to CLI exit status 1.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss, gradient or parameter. Maps to CLI exit status 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A model applied to data built with a different class count or encoding.
class IncompatibleModel : public InputError {
 public:
  using InputError::InputError;
};

class CheckpointError : public InputError {
 public:
  enum class Kind { io, corrupt, version, dimension, non_finite };

  CheckpointError(Kind kind, const std::string& what)
      : InputError(std::string(kind_name(kind)) + ": " + what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

  static const char* kind_name(Kind kind) noexcept {
    switch (kind) {
      case Kind::io: return "checkpoint io error";
      case Kind::corrupt: return "corrupt checkpoint";
      case Kind::version: return "checkpoint version mismatch";
      case Kind::dimension: return "checkpoint dimension mismatch";
      case Kind::non_finite: return "checkpoint contains non-finite values";
    }
    return "checkpoint error";
  }

 private:
  Kind kind_;
};

}  // namespace sgnn
