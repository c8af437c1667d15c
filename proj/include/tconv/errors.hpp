#pragma once

#include <stdexcept>
#include <string>

namespace tconv {

/// Input that does not match an expected file or record schema.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingHeaderError : public SchemaError {
 public:
  using SchemaError::SchemaError;
};

class TruncatedInputError : public SchemaError {
 public:
  using SchemaError::SchemaError;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tconv
