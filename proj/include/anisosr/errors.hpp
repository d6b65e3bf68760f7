#pragma once

#include <stdexcept>
#include <string>

namespace anisosr {

/// Input violates a documented precondition (bad shape, scale, range...).
/// The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File could not be read, written or parsed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FingerprintMismatch : public IoError {
 public:
  explicit FingerprintMismatch(const std::string& what) : IoError("fingerprint mismatch: " + what) {}
};

}  // namespace anisosr
