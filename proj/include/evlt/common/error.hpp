#pragma once

#include <stdexcept>
#include <string>

namespace evlt {

/// Raised when a caller violates an operation's precondition or shape contract.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when a computation produces a non-finite value. `op()` names the
/// primitive whose output (or gradient) went bad.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::string op, const std::string& what)
      : std::runtime_error(what), op_(std::move(op)) {}
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

// Literal messages stay unallocated on the passing path, which matters for
// per-element accessors.
inline void require(bool cond, const char* msg) {
  if (!cond) throw ContractError(msg);
}

}  // namespace evlt
