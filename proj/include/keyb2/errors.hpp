#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace keyb2 {

// Error taxonomy, mapped onto CLI exit codes:
//   UsageError -> 1, DataError (and ParseError) -> 2, RemoteError family -> 3.

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
public:
    ParseError(const std::string& msg, std::size_t line)
        : DataError(msg + " (line " + std::to_string(line) + ")"), line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class RemoteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Connection-level failure. Retriable; carries the indices of the items the
// caller had not received scores for when the transport broke.
class TransportError : public RemoteError {
public:
    explicit TransportError(const std::string& msg, std::vector<int> pending = {})
        : RemoteError(msg), pending_(std::move(pending)) {}

    const std::vector<int>& pending_indices() const { return pending_; }

private:
    std::vector<int> pending_;
};

// The service answered but the payload violates the protocol contract
// (count mismatch, non-finite score, malformed JSON).
class ProtocolError : public RemoteError {
public:
    using RemoteError::RemoteError;
};

} // namespace keyb2
