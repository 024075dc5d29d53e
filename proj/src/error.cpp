#include "driftlab/error.hpp"

namespace driftlab {

std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::EllipticityViolation: return "EllipticityViolation";
    case ErrorCode::BadCoefficients: return "BadCoefficients";
    case ErrorCode::UnboundedF: return "UnboundedF";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::OffGrid: return "OffGrid";
    case ErrorCode::HorizonExceeded: return "HorizonExceeded";
    case ErrorCode::BudgetExhausted: return "BudgetExhausted";
    case ErrorCode::TooFewCycles: return "TooFewCycles";
    case ErrorCode::HorizonTooShort: return "HorizonTooShort";
    case ErrorCode::SolverDiverged: return "SolverDiverged";
    case ErrorCode::NotCentered: return "NotCentered";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::CriterionFailed: return "CriterionFailed";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
{
}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

} // namespace driftlab
