#pragma once

#include <stdexcept>
#include <string>

namespace xlner {

/// Base class for all errors raised by this library.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument violates an operation's preconditions (shape mismatch,
/// out-of-range id, empty input, non-finite value, ...).
class invalid_input : public error {
public:
    using error::error;
};

/// A configuration document is malformed or inconsistent. The message
/// names the offending field path.
class config_error : public error {
public:
    using error::error;
};

/// A data file (CoNLL, spec JSON) could not be parsed. The message carries
/// the path and line number where applicable.
class parse_error : public error {
public:
    using error::error;
};

/// Filesystem-level failure (missing file, unwritable path).
class io_error : public error {
public:
    using error::error;
};

/// Checkpoint load failure. The kind distinguishes the failure modes so
/// callers and tests can tell them apart.
class checkpoint_error : public error {
public:
    enum class kind {
        malformed,        // not valid JSON / missing required fields / truncated
        bad_version,      // format_version not recognized
        shape_mismatch,   // block shape inconsistent with the declared config
        payload_mismatch, // payload length does not match the declared shape
        corrupt,          // checksum mismatch
    };

    checkpoint_error(kind k, const std::string& msg) : error(msg), kind_(k) {}
    kind which() const { return kind_; }

private:
    kind kind_;
};

} // namespace xlner
