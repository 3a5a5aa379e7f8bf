#include "sktune/error.hpp"

namespace sktune {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::NoTape: return "NoTape";
    case ErrorKind::TokenOutOfRange: return "TokenOutOfRange";
    case ErrorKind::SequenceTooLong: return "SequenceTooLong";
    case ErrorKind::SequenceEmpty: return "SequenceEmpty";
    case ErrorKind::PrefixLayerMismatch: return "PrefixLayerMismatch";
    case ErrorKind::IllegalPrefixLength: return "IllegalPrefixLength";
    case ErrorKind::BadRank: return "BadRank";
    case ErrorKind::MissingGrad: return "MissingGrad";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::MalformedLine: return "MalformedLine";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::UnknownLabel: return "UnknownLabel";
    case ErrorKind::BadFractions: return "BadFractions";
    case ErrorKind::Empty: return "Empty";
    case ErrorKind::NonBinary: return "NonBinary";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace sktune
