#pragma once

#include <stdexcept>
#include <string>

namespace multibo
{
/// Caller broke an operation's precondition (bad dimensions, invalid indices, out-of-range config).
class ContractError : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical routine failed (factorization, non-convergence).
class NumericalError : public std::runtime_error
{
  public:
    NumericalError(const std::string& what, double diagnostic = 0.0)
        : std::runtime_error(what), diagnostic_(diagnostic)
    {
    }

    /// Condition estimate or last gradient norm, depending on the thrower.
    double diagnostic() const noexcept { return diagnostic_; }

  private:
    double diagnostic_;
};

/// Session state machine used out of order (no pending batch, no posterior yet, ...).
class ProtocolError : public std::logic_error
{
  public:
    using std::logic_error::logic_error;
};

class BudgetExhausted : public ProtocolError
{
  public:
    using ProtocolError::ProtocolError;
};
} // namespace multibo
