#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace driftlab {

enum class ErrorCode {
    EllipticityViolation,
    BadCoefficients,
    UnboundedF,
    NonFinite,
    OffGrid,
    HorizonExceeded,
    BudgetExhausted,
    TooFewCycles,
    HorizonTooShort,
    SolverDiverged,
    NotCentered,
    ConfigError,
    CriterionFailed,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& what);
    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

} // namespace driftlab
