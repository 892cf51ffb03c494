#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace phantom {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor or layer shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset or checkpoint file.
class FormatError : public Error {
 public:
  enum class Kind { io, bad_magic, truncated, count_mismatch, bad_length, bad_value };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Invalid configuration value; carries the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Non-finite or exploding training loss.
class DivergenceError : public Error {
 public:
  DivergenceError(std::int64_t iteration, double loss)
      : Error("training diverged at iteration " + std::to_string(iteration) +
              " (loss=" + std::to_string(loss) + ")"),
        iteration_(iteration) {}
  std::int64_t iteration() const noexcept { return iteration_; }

 private:
  std::int64_t iteration_;
};

/// Cluster count does not fit in 64 bits.
class OverflowError : public Error {
 public:
  OverflowError(std::size_t label, const std::string& what) : Error(what), label_(label) {}
  std::size_t label() const noexcept { return label_; }

 private:
  std::size_t label_;
};

}  // namespace phantom
