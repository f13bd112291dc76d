#ifndef GBIAS_ERROR_HPP
#define GBIAS_ERROR_HPP

#include <stdexcept>
#include <string>

namespace gbias {

enum class ErrorCode {
  Io,
  Parse,
  Config,
  Lookup,
  Decoding,
  InsufficientData,
  Degenerate,
  Divergence,
};

/// Single exception type for the library; the code decides the CLI exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// 3 for numeric divergence, 2 for everything caused by inputs or configuration.
  int exit_code() const noexcept { return code_ == ErrorCode::Divergence ? 3 : 2; }

 private:
  ErrorCode code_;
};

}  // namespace gbias

#endif  // GBIAS_ERROR_HPP
