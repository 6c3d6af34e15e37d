#pragma once

#include <stdexcept>
#include <string>

namespace triage {

// Base for all engine errors. Subclasses of ValidationError signal bad input
// (schema, digest, labels); everything else is an internal failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public ValidationError {
 public:
  SchemaError(std::size_t index, const std::string& field, const std::string& what)
      : ValidationError("record " + std::to_string(index) + ": field '" + field + "' " + what),
        index_(index),
        field_(field) {}

  std::size_t index() const { return index_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t index_;
  std::string field_;
};

class DigestMismatch : public ValidationError {
 public:
  DigestMismatch(const std::string& expected, const std::string& actual)
      : ValidationError("manifest digest mismatch: expected " + expected + ", got " + actual),
        expected_(expected),
        actual_(actual) {}

  const std::string& expected() const { return expected_; }
  const std::string& actual() const { return actual_; }

 private:
  std::string expected_;
  std::string actual_;
};

class UnlabeledRecordError : public ValidationError {
 public:
  explicit UnlabeledRecordError(const std::string& id)
      : ValidationError("record " + id + " has no label"), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

class RatioError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class LengthMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class SnippetTooLarge : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyTrainSet : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptySplit : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyInput : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class MissingRecording : public ValidationError {
 public:
  explicit MissingRecording(const std::string& id)
      : ValidationError("no recorded fuzz outcome for warning " + id), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

class IllegalAction : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class DegenerateDistribution : public Error {
 public:
  using Error::Error;
};

class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(std::size_t minibatch, const std::string& what)
      : Error("non-finite loss in minibatch " + std::to_string(minibatch) + ": " + what),
        minibatch_(minibatch) {}
  std::size_t minibatch() const { return minibatch_; }

 private:
  std::size_t minibatch_;
};

class UnknownPattern : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class UnresolvableTarget : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace triage
