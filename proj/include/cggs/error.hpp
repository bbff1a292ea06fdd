#pragma once

#include <stdexcept>
#include <string>

namespace cggs {

// Every failure the library reports derives from Error so callers (the CLI in
// particular) can map families of errors onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define CGGS_DEFINE_ERROR(Name)                                                \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {}   \
    }

CGGS_DEFINE_ERROR(DomainError);
CGGS_DEFINE_ERROR(ConfigError);
CGGS_DEFINE_ERROR(NumericalError);
CGGS_DEFINE_ERROR(ParseError);
CGGS_DEFINE_ERROR(ValidationError);
CGGS_DEFINE_ERROR(DimensionMismatch);
CGGS_DEFINE_ERROR(ZeroVector);
CGGS_DEFINE_ERROR(EmptyDataset);
CGGS_DEFINE_ERROR(ModeError);
CGGS_DEFINE_ERROR(IoError);

#undef CGGS_DEFINE_ERROR

} // namespace cggs
