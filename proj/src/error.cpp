#include "recme/error.hpp"

namespace recme {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::MalformedContainer: return "MalformedContainer";
        case ErrorKind::UnsupportedEncoding: return "UnsupportedEncoding";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
        case ErrorKind::InvalidSpec: return "InvalidSpec";
        case ErrorKind::MissingCache: return "MissingCache";
        case ErrorKind::IoFailure: return "IoFailure";
        case ErrorKind::BadMagic: return "BadMagic";
        case ErrorKind::VersionMismatch: return "VersionMismatch";
        case ErrorKind::ChecksumMismatch: return "ChecksumMismatch";
        case ErrorKind::EmptyDataset: return "EmptyDataset";
        case ErrorKind::UnreadableFile: return "UnreadableFile";
        case ErrorKind::ClassTooSmall: return "ClassTooSmall";
        case ErrorKind::TooShort: return "TooShort";
        case ErrorKind::InvalidModel: return "InvalidModel";
        case ErrorKind::DuplicateName: return "DuplicateName";
        case ErrorKind::TooFewSpeakers: return "TooFewSpeakers";
    }
    return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace recme
