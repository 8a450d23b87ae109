#pragma once

#include <stdexcept>
#include <string>

namespace skelnav {

/// Caller supplied something that violates an operation's preconditions.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A model provider failed (transport down, auth missing, HTTP error).
class BackendError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A provider answered, but the answer breaks the reply contract
/// (non-JSON, unknown waypoint id, empty explanation).
class ProtocolError : public BackendError {
public:
    using BackendError::BackendError;
};

class TimeoutError : public ProtocolError {
public:
    using ProtocolError::ProtocolError;
};

}  // namespace skelnav
