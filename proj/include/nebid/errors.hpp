#pragma once

#include <stdexcept>
#include <string>

namespace nebid {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Non-decaying response or pole outside the unit circle.
class UnstableSystem : public Error {
 public:
  using Error::Error;
};

// A factorization failed even after the allowed regularization.
class IllConditioned : public Error {
 public:
  using Error::Error;
};

class RankDeficient : public Error {
 public:
  using Error::Error;
};

class DegenerateMoments : public Error {
 public:
  using Error::Error;
};

class OptimizationFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace nebid
