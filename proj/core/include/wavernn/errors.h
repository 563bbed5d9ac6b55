#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wavernn {

// Caller supplied something malformed: wrong dimensions, out-of-range
// values, unreadable files.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation produced a non-finite value.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " at step " + std::to_string(step)),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// A serialized artifact (model file, WAV file) is corrupt or unsupported.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace wavernn
