#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace varenn {

/// Machine-readable failure category. The CLI maps each one to its own exit code.
enum class ErrorCategory {
    format,
    length,
    validation,
    statistics,
    domain,
    configuration,
    shape,
    consistency,
    dataset,
    io,
};

std::string_view to_string(ErrorCategory c);

/// Exit code used by the command-line tool for a category (always nonzero).
int exit_code(ErrorCategory c);

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

#define VARENN_DEFINE_ERROR(Name, cat)                                              \
    class Name : public Error {                                                    \
    public:                                                                        \
        explicit Name(const std::string& what) : Error(ErrorCategory::cat, what) {} \
    };

VARENN_DEFINE_ERROR(FormatError, format)
VARENN_DEFINE_ERROR(LengthError, length)
VARENN_DEFINE_ERROR(ValidationError, validation)
VARENN_DEFINE_ERROR(StatisticsError, statistics)
VARENN_DEFINE_ERROR(DomainError, domain)
VARENN_DEFINE_ERROR(ConfigError, configuration)
VARENN_DEFINE_ERROR(ShapeError, shape)
VARENN_DEFINE_ERROR(ConsistencyError, consistency)
VARENN_DEFINE_ERROR(DatasetError, dataset)
VARENN_DEFINE_ERROR(IoError, io)

#undef VARENN_DEFINE_ERROR

}  // namespace varenn
