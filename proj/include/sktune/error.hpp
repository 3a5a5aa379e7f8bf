#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sktune {

enum class ErrorKind {
  ShapeMismatch,
  LabelOutOfRange,
  NoTape,
  TokenOutOfRange,
  SequenceTooLong,
  SequenceEmpty,
  PrefixLayerMismatch,
  IllegalPrefixLength,
  BadRank,
  MissingGrad,
  NonFinite,
  MalformedLine,
  LengthMismatch,
  UnknownLabel,
  BadFractions,
  Empty,
  NonBinary,
  IoError,
  IndexOutOfRange,
  InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised by the trainer; carries the step whose loss was not finite.
class NonFiniteError : public Error {
 public:
  NonFiniteError(std::size_t step, double loss)
      : Error(ErrorKind::NonFinite,
              "loss " + std::to_string(loss) + " at step " + std::to_string(step)),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace sktune
