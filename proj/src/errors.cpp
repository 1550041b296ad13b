#include "pinnplast/errors.hpp"

namespace pinnplast {

Error::Error(ErrorKind kind, std::string name, const std::string& what)
    : std::runtime_error(name + ": " + what), kind_(kind), name_(std::move(name)) {}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config:
      return 2;
    case ErrorKind::Mismatch:
      return 3;
    case ErrorKind::Numerical:
      return 4;
    case ErrorKind::Missing:
      return 2;
  }
  return 1;
}

}  // namespace pinnplast
