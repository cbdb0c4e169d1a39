#pragma once

#include <stdexcept>
#include <string>

namespace smot {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MaturityOffGrid : public Error {
public:
    using Error::Error;
};

class EmptyBand : public Error {
public:
    using Error::Error;
};

class NonFiniteMessage : public Error {
public:
    using Error::Error;
};

class NewtonDiverged : public Error {
public:
    using Error::Error;
};

class PriceOutOfBounds : public Error {
public:
    using Error::Error;
};

class TooLarge : public Error {
public:
    using Error::Error;
};

class GridMismatch : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

} // namespace smot
