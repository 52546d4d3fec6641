#pragma once

#include <stdexcept>
#include <string>

namespace ntkd {

// Invalid construction parameters (dimensions, counts, activation spec).
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mismatched vector/matrix dimensions at call time.
struct shape_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values or failed factorizations.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed binary or text input.
struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad experiment/spec configuration supplied by the user.
struct validation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A documented precondition between components was broken.
struct contract_violation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct index_error : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// Iterative solver hit its iteration cap; carries the last estimate.
struct iteration_limit_error : std::runtime_error {
  iteration_limit_error(const std::string& what, double estimate)
      : std::runtime_error(what), last_estimate(estimate) {}
  double last_estimate;
};

}  // namespace ntkd
