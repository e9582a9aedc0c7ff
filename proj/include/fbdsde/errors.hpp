#pragma once

#include <stdexcept>
#include <string>

namespace fbdsde {

// Invalid user-facing input: bad grid bounds, malformed config, unknown keys.
class input_error : public std::runtime_error {
 public:
  explicit input_error(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure surfaced with context: rank-deficient regression,
// Picard non-convergence, non-finite values.
class solver_error : public std::runtime_error {
 public:
  explicit solver_error(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw input_error(what);
}

}  // namespace fbdsde
