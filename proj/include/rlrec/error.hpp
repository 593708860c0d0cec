#pragma once

#include <stdexcept>
#include <string>

namespace rlrec {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input files (corpus, relevance, checkpoints).
class IngestError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration or reward specification.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An exhaustive enumeration would exceed its configured bound.
class EnumerationBoundError : public Error {
 public:
  using Error::Error;
};

/// Lookup of a state id that the relevance dictionary does not contain.
class UnknownStateError : public Error {
 public:
  explicit UnknownStateError(const std::string& id)
      : Error("unknown state id: " + id), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

}  // namespace rlrec
