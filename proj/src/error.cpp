#include "omad/error.hpp"

namespace omad {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::PreconditionViolation: return "PreconditionViolation";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::RowArity: return "RowArity";
    case ErrorCode::IndexGap: return "IndexGap";
    case ErrorCode::UnknownGroup: return "UnknownGroup";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::DegenerateSplit: return "DegenerateSplit";
    case ErrorCode::NyquistViolation: return "NyquistViolation";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::AllDropped: return "AllDropped";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::MissingDetector: return "MissingDetector";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

} // namespace omad
