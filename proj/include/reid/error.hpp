#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace reid {

// Error taxonomy. Shape/Param/Dataset/State/Io/Protocol are validation
// failures (CLI exit 1); Numeric and Divergence are runtime failures
// (CLI exit 2).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error { using Error::Error; };
struct ParamError : Error { using Error::Error; };
struct DatasetError : Error { using Error::Error; };
struct StateError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct ProtocolError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };

struct DivergenceError : NumericError {
  DivergenceError(const std::string& what, std::size_t iter)
      : NumericError(what + " (iteration " + std::to_string(iter) + ")"),
        iteration(iter) {}
  std::size_t iteration;
};

}  // namespace reid
