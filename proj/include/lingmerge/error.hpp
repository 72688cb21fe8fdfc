#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lingmerge {

enum class ErrorCode {
    kFormat,               // malformed container header or naming convention
    kOverlap,              // tensor data_offsets overlap
    kPairing,              // lora_A without lora_B or vice versa
    kValidation,           // shape/rank invariants
    kData,                 // non-finite payload
    kIo,
    kParameter,
    kAlignment,            // inputs disagree on layer names or shapes
    kNumerical,            // SVD did not converge
    kUndefinedSimilarity,  // cosine against a zero vector
    kUndefinedRate,        // ratio with an empty denominator
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace lingmerge
