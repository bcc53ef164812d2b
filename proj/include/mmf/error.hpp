#pragma once

#include <stdexcept>
#include <string>

namespace mmf {

// All recoverable failures in the library surface as mmf::Error so the CLI
// can report them uniformly and exit nonzero.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace mmf
