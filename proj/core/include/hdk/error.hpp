#pragma once

#include <stdexcept>
#include <string>

namespace hdk {

// Failure categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kInvalidArgument,
  kParse,     // malformed text or binary input
  kSemantic,  // well-formed input that violates a model constraint
  kIo,
  kCorrupt,   // checksum or container-structure failure
  kMissing,   // required artifact or tensor not present
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::kInvalidArgument, what);
}

}  // namespace hdk
