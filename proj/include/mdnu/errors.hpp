#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mdnu {

/// Invalid dimensions, unknown keys, missing models.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation called in the wrong object state (e.g. backward without a cached forward).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Bad argument value or shape mismatch.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t epoch)
      : std::runtime_error(what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace mdnu
