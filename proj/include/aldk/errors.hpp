#pragma once

#include <stdexcept>
#include <string>

namespace aldk {

/// Base of every validation error raised by the library. The CLI maps these
/// to exit code 1; anything else escaping is treated as an internal failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Correlation of an image with zero variance is undefined.
class DegenerateImageError : public Error {
 public:
  using Error::Error;
};

/// Raised when a higher-order gradient is requested through an op whose
/// backward pass is not itself recorded on the tape.
class SecondOrderError : public Error {
 public:
  explicit SecondOrderError(std::string op)
      : Error("operation '" + op + "' has no differentiable backward"),
        op_(std::move(op)) {}
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(long long iteration, const std::string& what)
      : Error("non-finite " + what + " at iteration " + std::to_string(iteration)),
        iteration_(iteration) {}
  long long iteration() const noexcept { return iteration_; }

 private:
  long long iteration_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Binary/JSON payload problems. `kind` lets callers branch without parsing
/// the message.
class FormatError : public Error {
 public:
  enum class Kind { BadMagic, BadVersion, Truncated, Inconsistent, NonBinaryMask, Schema };
  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Broken internal contract (a generator produced a folded field, ...).
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace aldk
