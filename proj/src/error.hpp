#pragma once

#include <stdexcept>
#include <string>

namespace vocorpus {

enum class ErrorCode {
  InvalidArgument,
  MalformedContainer,
  UnsupportedFormat,
  EmptyClip,
  ClipTooShort,
  ScriptInvalid,
  InvalidName,
  NameTaken,
  WeakSecret,
  AuthFailure,
  Unauthenticated,
  Unauthorized,
  UnknownCorpus,
  UnknownParticipant,
  BadOrdinal,
  CorpusClosed,
  NotCompleted,
  NotReviewed,
  NotIssued,
  Io,
  Internal,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace vocorpus
