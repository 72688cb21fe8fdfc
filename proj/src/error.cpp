#include "lingmerge/error.hpp"

namespace lingmerge {

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::kFormat: return "E_FORMAT";
        case ErrorCode::kOverlap: return "E_OVERLAP";
        case ErrorCode::kPairing: return "E_PAIRING";
        case ErrorCode::kValidation: return "E_VALIDATION";
        case ErrorCode::kData: return "E_DATA";
        case ErrorCode::kIo: return "E_IO";
        case ErrorCode::kParameter: return "E_PARAMETER";
        case ErrorCode::kAlignment: return "E_ALIGNMENT";
        case ErrorCode::kNumerical: return "E_NUMERICAL";
        case ErrorCode::kUndefinedSimilarity: return "E_UNDEFINED_SIMILARITY";
        case ErrorCode::kUndefinedRate: return "E_UNDEFINED_RATE";
    }
    return "E_UNKNOWN";
}

}  // namespace lingmerge
