#pragma once

#include <stdexcept>
#include <string>

namespace mockskel {

// Error classes map one-to-one onto CLI exit codes.
enum class ErrorKind {
  Usage = 2,
  Io = 3,
  Parse = 4,
  Degenerate = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

inline Error parse_error(const std::string& what) { return {ErrorKind::Parse, what}; }
inline Error io_error(const std::string& what) { return {ErrorKind::Io, what}; }
inline Error usage_error(const std::string& what) { return {ErrorKind::Usage, what}; }
inline Error degenerate_error(const std::string& what) { return {ErrorKind::Degenerate, what}; }

}  // namespace mockskel
