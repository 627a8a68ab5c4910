#pragma once

#include <stdexcept>
#include <string>

namespace rlhflab {

// All precondition and validation failures throw this type. The message is
// the contract: callers and tests match on its text.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rlhflab
