#pragma once

#include <stdexcept>
#include <string>

namespace mdpo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised while reading or validating a run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

#define MDPO_DEFINE_ERROR_FROM(Name, Base)                                 \
    class Name : public Base {                                             \
    public:                                                                \
        explicit Name(const std::string& what) : Base(#Name ": " + what) {} \
    };
#define MDPO_DEFINE_ERROR(Name) MDPO_DEFINE_ERROR_FROM(Name, Error)

MDPO_DEFINE_ERROR(DimensionMismatch)
MDPO_DEFINE_ERROR(SupportViolation)
MDPO_DEFINE_ERROR(NonPositiveInput)
MDPO_DEFINE_ERROR(ZeroSupport)
MDPO_DEFINE_ERROR(InvalidDistribution)
MDPO_DEFINE_ERROR(ShapeMismatch)
MDPO_DEFINE_ERROR(NonFiniteInput)
MDPO_DEFINE_ERROR(NonFiniteGradient)
MDPO_DEFINE_ERROR(UnknownEnv)
MDPO_DEFINE_ERROR(EnvFailure)
MDPO_DEFINE_ERROR(IoError)

MDPO_DEFINE_ERROR_FROM(UnknownKey, ConfigError)
MDPO_DEFINE_ERROR_FROM(BadValue, ConfigError)
MDPO_DEFINE_ERROR_FROM(MissingRequired, ConfigError)

#undef MDPO_DEFINE_ERROR
#undef MDPO_DEFINE_ERROR_FROM

}  // namespace mdpo
