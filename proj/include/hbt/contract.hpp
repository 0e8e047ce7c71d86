#pragma once

#include <stdexcept>

namespace hbt {

// Raised when a caller breaks an operation's precondition (popping an empty
// continuation, joining a task with no pending edges, ...).
class contract_violation : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

inline auto expects(bool ok, const char* what) -> void {
  if (! ok) [[unlikely]] {
    throw contract_violation(what);
  }
}

} // namespace hbt
