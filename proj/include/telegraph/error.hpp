#pragma once

#include <stdexcept>
#include <string>

namespace telegraph {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible matrix or vector shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A node, pair or claim id that does not exist.
class LookupError : public Error {
 public:
  using Error::Error;
};

class PersistenceError : public Error {
 public:
  PersistenceError(const std::string& path, const std::string& cause)
      : Error("persistence error at '" + path + "': " + cause), path_(path), cause_(cause) {}

  const std::string& path() const { return path_; }
  const std::string& cause() const { return cause_; }

 private:
  std::string path_;
  std::string cause_;
};

// Input that violates an operation's precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Training diverged or produced non-finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace telegraph
