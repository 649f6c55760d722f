#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace recme {

enum class ErrorKind {
    MalformedContainer,
    UnsupportedEncoding,
    InvalidArgument,
    ShapeMismatch,
    LabelOutOfRange,
    InvalidSpec,
    MissingCache,
    IoFailure,
    BadMagic,
    VersionMismatch,
    ChecksumMismatch,
    EmptyDataset,
    UnreadableFile,
    ClassTooSmall,
    TooShort,
    InvalidModel,
    DuplicateName,
    TooFewSpeakers,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so callers (CLI exit
// codes, HTTP status mapping) can dispatch without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace recme
