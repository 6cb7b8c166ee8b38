#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace omad {

enum class ErrorCode {
    PreconditionViolation,
    // dataset
    MalformedHeader,
    RowArity,
    IndexGap,
    UnknownGroup,
    EmptyCorpus,
    DegenerateSplit,
    // dsp
    NyquistViolation,
    TooShort,
    // featsel
    ZeroVariance,
    AllDropped,
    // nn
    ShapeMismatch,
    StaleCache,
    Diverged,
    // prune / io
    IoFailure,
    FileNotFound,
    VersionMismatch,
    // baselines
    DegenerateData,
    // eval / pipeline
    LengthMismatch,
    MissingDetector,
    InvalidConfig,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (and the Python bindings) can branch on the kind of failure.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond) {
        throw Error(code, what);
    }
}

} // namespace omad
