#pragma once

#include <stdexcept>
#include <string>

namespace viewsched {

// Malformed or inconsistent input: profiles, manifests, model files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A runtime invariant was violated (budget overrun in a deterministic run,
// non-PSD covariance that could not be repaired, ...).
class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace viewsched
