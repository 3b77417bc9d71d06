#pragma once

#include <stdexcept>
#include <string>

namespace kfarm {

// Error categories shared by the whole library. The wire protocol and the
// C API both map onto these, so keep the list short and stable.
enum class Errc {
    parse,     // text did not match a grammar (values, tasks, scripts, frames)
    bad_value, // type/arity/shape mismatch, numeric domain errors
    unbound,   // identifier not bound in the environment
    bad_task,  // task name not in the vocabulary
    io,        // file system failures
    spawn,     // could not start or talk to a child process
    timeout,   // a child or peer did not answer in time
    protocol,  // peer sent a malformed or unexpected frame
    state      // operation not valid in the current state
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
public:
    Error(Errc code, std::string message)
        : std::runtime_error(std::move(message)), code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

// Parse failures carry the byte offset of the offending input.
class ParseError : public Error {
public:
    ParseError(std::string message, std::size_t offset)
        : Error(Errc::parse, message + " (at byte " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

} // namespace kfarm
