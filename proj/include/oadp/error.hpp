#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace oadp {

// Error classes surface in the CLI's JSON error records, so the names are
// part of the external contract.
enum class ErrorKind {
  kDimension,
  kEmptyAttentionRow,
  kDegenerateBox,
  kPartition,
  kEmptyObjectMask,
  kZeroVector,
  kInvalidArgument,
  kFormat,
  kIo,
  kConfig,
};

std::string_view error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void check(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace oadp
