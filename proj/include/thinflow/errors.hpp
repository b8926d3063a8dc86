#pragma once

#include <stdexcept>
#include <string>

namespace thinflow {

/// All library failures carry a short machine-checkable kind plus a human message.
/// The CLI maps kinds onto exit codes; tests match on kind().
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

[[noreturn]] inline void fail(std::string kind, const std::string& msg) {
    throw Error(std::move(kind), msg);
}

namespace errkind {
// configuration / validation
inline constexpr const char* ConfigParse          = "ConfigParse";
inline constexpr const char* ExprParse            = "ExprParse";
inline constexpr const char* ConservationViolated = "ConservationViolated";
inline constexpr const char* GammaOutOfWindow     = "GammaOutOfWindow";
inline constexpr const char* MOrderTooSmall       = "MOrderTooSmall";
inline constexpr const char* SupportViolation     = "SupportViolation";
inline constexpr const char* MatchingViolated     = "MatchingViolated";
inline constexpr const char* BadOrderIndex        = "BadOrderIndex";
// geometry / meshing
inline constexpr const char* SpacingTooCoarse     = "SpacingTooCoarse";
inline constexpr const char* GeometryOverlap      = "GeometryOverlap";
inline constexpr const char* TruncationTooShort   = "TruncationTooShort";
inline constexpr const char* OutOfRegion          = "OutOfRegion";
inline constexpr const char* OutOfDomain          = "OutOfDomain";
inline constexpr const char* GridMismatch         = "GridMismatch";
// solvers
inline constexpr const char* WrongSign            = "WrongSign";
inline constexpr const char* IncompatibleData     = "IncompatibleData";
inline constexpr const char* SolvabilityDefect    = "SolvabilityDefect";
inline constexpr const char* TruncationError      = "TruncationError";
inline constexpr const char* NonpositiveOutflowSpeed = "NonpositiveOutflowSpeed";
inline constexpr const char* LinearSolveFailure   = "LinearSolveFailure";
inline constexpr const char* SolverDiverged       = "SolverDiverged";
inline constexpr const char* IoFailure            = "IoFailure";
} // namespace errkind

} // namespace thinflow
