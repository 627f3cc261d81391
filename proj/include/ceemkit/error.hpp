#pragma once

#include <stdexcept>
#include <string>

namespace ceemkit {

// Error hierarchy. Every subclass carries a short machine-greppable code
// that the CLI prints on stderr as "ceemkit: error[CODE]: message".
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string &msg)
      : std::runtime_error(msg), code_(std::move(code)) {}
  const std::string &code() const { return code_; }

private:
  std::string code_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string &msg) : Error("shape", msg) {}
};

struct ValueError : Error {
  explicit ValueError(const std::string &msg) : Error("value", msg) {}
};

struct StateError : Error {
  explicit StateError(const std::string &msg) : Error("state", msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string &msg) : Error("io", msg) {}
};

struct DecodeError : Error {
  explicit DecodeError(const std::string &msg) : Error("decode", msg) {}
};

struct StratifyError : Error {
  explicit StratifyError(const std::string &msg) : Error("stratify", msg) {}
};

struct DivergedError : Error {
  explicit DivergedError(const std::string &msg) : Error("diverged", msg) {}
};

// Checkpoint loading distinguishes a wrong/unknown format version from a
// structurally damaged file.
struct CheckpointVersionError : Error {
  explicit CheckpointVersionError(const std::string &msg)
      : Error("ckpt-version", msg) {}
};

struct CheckpointMalformedError : Error {
  explicit CheckpointMalformedError(const std::string &msg)
      : Error("ckpt-malformed", msg) {}
};

} // namespace ceemkit
