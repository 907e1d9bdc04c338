#ifndef OCHAIN_ERROR_HPP
#define OCHAIN_ERROR_HPP

#include <stdexcept>
#include <string>

namespace ochain {

// Input outside the mathematical domain of an operation.
struct domain_error : std::domain_error {
  using std::domain_error::domain_error;
};

// A numerical procedure did not reach its tolerance. The message carries the
// solver state at the point of failure.
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Simulation blew up; t_macro is the last time at which the state was valid.
struct instability_error : std::runtime_error {
  double t_macro;
  instability_error(const std::string& what, double t)
      : std::runtime_error(what), t_macro(t) {}
};

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ochain

#endif
