#pragma once

#include <stdexcept>
#include <string>

namespace kinegen {

inline constexpr const char* version = "0.1.0";

// Error taxonomy. The CLI maps these onto process exit codes:
// validation/shape/degenerate -> 2, numerical -> 3, io -> 4.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct validation_error : error {
  using error::error;
};

struct shape_error : validation_error {
  using validation_error::validation_error;
};

struct degenerate_data_error : validation_error {
  using validation_error::validation_error;
};

struct numerical_error : error {
  using error::error;
};

struct io_error : error {
  using error::error;
};

}  // namespace kinegen
