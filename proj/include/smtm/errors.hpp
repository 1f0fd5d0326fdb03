#pragma once

#include <stdexcept>
#include <string>

namespace smtm {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Manifest or config text that does not parse.
class ParseError : public Error {
public:
    using Error::Error;
};

// Byte or element counts that disagree with a declared layout.
class SizeError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// Operation invoked in the wrong lifecycle state.
class StateError : public Error {
public:
    using Error::Error;
};

// Memory structures that disagree with each other.
class IntegrityError : public Error {
public:
    using Error::Error;
};

class ArityError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace smtm
