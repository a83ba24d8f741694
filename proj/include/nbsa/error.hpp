#pragma once

#include <stdexcept>
#include <string>

namespace nbsa {

// Bad shapes, bad labels, bad configuration values. The CLI maps this to
// exit code 2; everything else that escapes maps to 3.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace nbsa
