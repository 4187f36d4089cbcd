#pragma once

#include <stdexcept>
#include <string>

namespace nmt {

enum class ErrorKind {
  kContract,     // precondition violated by the caller
  kDimension,    // tensor shape mismatch
  kNumeric,      // NaN / Inf / overflow
  kDegenerate,   // input with no usable content (empty probe, all-pad batch)
  kData,         // malformed or missing input files
  kCorrupt,      // checkpoint bytes do not parse
  kVersion,      // checkpoint format version unsupported
  kFingerprint,  // tokenizer does not match checkpoint
  kShape,        // checkpoint parameter does not match model config
  kInternal,     // invariant broken inside the library
};

const char* to_string(ErrorKind kind);

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

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(ErrorKind::kContract, what);
}

}  // namespace nmt
