#pragma once

#include <stdexcept>
#include <string>

namespace quads {

// Contract violations, bad configuration and bad files. The CLI maps these to
// exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite losses, gradients or inputs. The CLI maps these to exit code 2.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Malformed or corrupted file contents; carries the byte offset of the fault.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace quads
