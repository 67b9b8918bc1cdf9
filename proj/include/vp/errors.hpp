#pragma once

#include <stdexcept>

namespace vp {

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct sequence_length_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct input_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when training hits a non-finite loss; carries step diagnostics.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace vp
