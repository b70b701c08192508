#pragma once

#include <stdexcept>
#include <string>

namespace cspeech {

// Base of every error raised by the library. Callers that only care about
// "something in the pipeline failed" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input file or record does not match its declared schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class EmptyCorpusError : public Error {
 public:
  using Error::Error;
};

// Value hierarchy fails a structural or cardinality check.
class TaxonomyError : public Error {
 public:
  using Error::Error;
};

// Shape or length mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Numerically undefined operation (zero-norm cosine, log of zero, ...).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Model used before it was trained or loaded.
class StateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace cspeech
