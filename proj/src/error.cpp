#include "error.hpp"

namespace vocorpus {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MalformedContainer: return "MalformedContainer";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::EmptyClip: return "EmptyClip";
    case ErrorCode::ClipTooShort: return "ClipTooShort";
    case ErrorCode::ScriptInvalid: return "ScriptInvalid";
    case ErrorCode::InvalidName: return "InvalidName";
    case ErrorCode::NameTaken: return "NameTaken";
    case ErrorCode::WeakSecret: return "WeakSecret";
    case ErrorCode::AuthFailure: return "AuthFailure";
    case ErrorCode::Unauthenticated: return "Unauthenticated";
    case ErrorCode::Unauthorized: return "Unauthorized";
    case ErrorCode::UnknownCorpus: return "UnknownCorpus";
    case ErrorCode::UnknownParticipant: return "UnknownParticipant";
    case ErrorCode::BadOrdinal: return "BadOrdinal";
    case ErrorCode::CorpusClosed: return "CorpusClosed";
    case ErrorCode::NotCompleted: return "NotCompleted";
    case ErrorCode::NotReviewed: return "NotReviewed";
    case ErrorCode::NotIssued: return "NotIssued";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Internal: return "Internal";
  }
  return "Internal";
}

}  // namespace vocorpus
