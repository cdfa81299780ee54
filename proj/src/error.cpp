#include "varenn/error.hpp"

namespace varenn {

std::string_view to_string(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::format: return "format";
        case ErrorCategory::length: return "length";
        case ErrorCategory::validation: return "validation";
        case ErrorCategory::statistics: return "statistics";
        case ErrorCategory::domain: return "domain";
        case ErrorCategory::configuration: return "configuration";
        case ErrorCategory::shape: return "shape";
        case ErrorCategory::consistency: return "consistency";
        case ErrorCategory::dataset: return "dataset";
        case ErrorCategory::io: return "io";
    }
    return "unknown";
}

int exit_code(ErrorCategory c) { return 10 + static_cast<int>(c); }

}  // namespace varenn
