#pragma once

#include <stdexcept>
#include <string>

namespace codepipe {

/// Base error for the library. Carries the name of the module that raised it
/// so pipeline failures can be reported with their origin.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message)
      : std::runtime_error(module + ": " + message), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

}  // namespace codepipe
