#ifndef MONCAP_ERRORS_HPP
#define MONCAP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace moncap {

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// E is not contained in F; the capacity is +infinity by convention.
class IncompatiblePair : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace moncap

#endif  // MONCAP_ERRORS_HPP
