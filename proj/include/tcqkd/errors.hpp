#pragma once

#include <stdexcept>
#include <string>

namespace tcqkd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Too few samples for an estimator to be meaningful.
class InsufficientStatistics : public Error {
 public:
  using Error::Error;
};

/// No unambiguous detections, so the error rate has no denominator.
class UndefinedQber : public Error {
 public:
  using Error::Error;
};

class NoData : public Error {
 public:
  using Error::Error;
};

/// An attack parameter set implies an intercept fraction above one.
class ConstraintViolation : public Error {
 public:
  ConstraintViolation(const std::string& what, double binding_fraction)
      : Error(what), binding_fraction_(binding_fraction) {}
  double binding_fraction() const noexcept { return binding_fraction_; }

 private:
  double binding_fraction_;
};

/// Root search found no sign change of I_AB - I_AE on the bracket.
class NoCrossing : public Error {
 public:
  enum class Kind { never_secure, always_secure };
  NoCrossing(const std::string& what, Kind kind) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, std::string key, int line = 0)
      : Error(what), key_(std::move(key)), line_(line) {}
  const std::string& key() const noexcept { return key_; }
  int line() const noexcept { return line_; }

 private:
  std::string key_;
  int line_;
};

}  // namespace tcqkd
