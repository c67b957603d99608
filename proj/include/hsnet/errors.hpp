#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hsnet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that cannot be combined.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid layer or run configuration (stride/padding, step size, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A forward trace used with a graph it was not produced by.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// Unknown layer/parameter name or out-of-range coordinate.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite deviation penalty.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t epoch)
      : Error(what), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

/// A graph that does not have the structure an operation requires.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Malformed IDX / CIFAR / graph container. Carries the byte offset where
/// decoding stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace hsnet
