#pragma once

#include <stdexcept>
#include <string>

namespace bellsim {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Conditioning on an assignment whose marginal probability is zero.
class ImpossibleEvidence : public Error {
 public:
  using Error::Error;
};

/// Two observers' facts contradict, or an observer received a zero-probability event.
class RealismViolation : public Error {
 public:
  using Error::Error;
};

/// Variables, domains, or settings that do not line up.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class InvalidSchedule : public Error {
 public:
  using Error::Error;
};

class UnsupportedScenario : public Error {
 public:
  using Error::Error;
};

/// A dataset lacks trials for a setting pair that an estimator needs.
class MissingData : public Error {
 public:
  using Error::Error;
};

}  // namespace bellsim
