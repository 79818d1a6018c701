#pragma once

#include <stdexcept>
#include <string>

namespace adave {

// File and stream problems: missing files, malformed headers, short reads.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A persisted artifact fails its checksum or offset bookkeeping.
class IntegrityError : public IoError {
public:
    using IoError::IoError;
};

// Precondition violations: shape mismatches, bad configuration values.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Two-pass discipline breaches. These indicate a pipeline bug, never a
// recoverable user error.
class InvariantError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CacheMiss : public InvariantError {
public:
    using InvariantError::InvariantError;
};

class DuplicateKey : public InvariantError {
public:
    using InvariantError::InvariantError;
};

class CacheSealed : public InvariantError {
public:
    using InvariantError::InvariantError;
};

class CacheNotSealed : public InvariantError {
public:
    using InvariantError::InvariantError;
};

}  // namespace adave
