#pragma once

#include <stdexcept>
#include <string>

namespace qar {

enum class ErrorCode {
    InvalidArgument,
    Io,
    Format,
    OutOfVocabulary,
    Empty,
    Internal,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace qar
