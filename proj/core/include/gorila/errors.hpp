#pragma once

#include <stdexcept>
#include <cstdint>
#include <string>
#include <vector>

namespace gorila {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

class LayoutError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Replay below warm-up or empty.
class NotReady : public Error {
public:
    using Error::Error;
};

class FixtureError : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class UndefinedBaseline : public Error {
public:
    using Error::Error;
};

class Unsupported : public Error {
public:
    using Error::Error;
};

// Raised by an environment when a step cannot be completed.
class EnvFault : public Error {
public:
    using Error::Error;
};

enum class ProtocolErrc {
    bad_magic,
    bad_crc,
    truncated,
    unknown_kind,
    oversize,
    malformed,
};

const char* to_string(ProtocolErrc code);

class ProtocolError : public Error {
public:
    ProtocolError(ProtocolErrc code, const std::string& what)
        : Error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ProtocolErrc code() const noexcept { return code_; }

private:
    ProtocolErrc code_;
};

class PartialFetchError : public Error {
public:
    PartialFetchError(std::vector<std::uint32_t> missing, const std::string& what)
        : Error(what), missing_(std::move(missing)) {}

    const std::vector<std::uint32_t>& missing() const noexcept { return missing_; }

private:
    std::vector<std::uint32_t> missing_;
};

// Connection-level failures: refused, reset, closed by peer.
class TransportError : public Error {
public:
    using Error::Error;
};

}  // namespace gorila
