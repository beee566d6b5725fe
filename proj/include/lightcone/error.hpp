#pragma once

#include <stdexcept>
#include <string>

namespace lightcone {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// A path segment whose separation is spacelike, so its proper time is not real.
class NonTimelikeSegment : public Error {
public:
    using Error::Error;
};

/// Rejection sampling exhausted its trial budget without accepting anything.
class ZeroAccepted : public Error {
public:
    ZeroAccepted(const std::string& what, std::size_t attempted)
        : Error(what), attempted_(attempted) {}
    std::size_t attempted() const { return attempted_; }

private:
    std::size_t attempted_;
};

/// Malformed, truncated or wrong-version binary container.
class FormatError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// NaN/inf encountered where finite values are required (e.g. divergent training).
class NumericalFailure : public Error {
public:
    using Error::Error;
};

}  // namespace lightcone
