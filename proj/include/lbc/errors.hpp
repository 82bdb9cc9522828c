#ifndef LBC_ERRORS_HPP
#define LBC_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lbc {

// Shape or dimension disagreement between a model and its inputs.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A NaN or infinity reached a place that requires finite values.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed, empty or otherwise unusable input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A training loop produced a non-finite loss or parameter.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t iteration, const std::string& what)
      : std::runtime_error("diverged at iteration " + std::to_string(iteration) +
                           ": " + what),
        iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace lbc

#endif  // LBC_ERRORS_HPP
