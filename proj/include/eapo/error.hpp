#pragma once

#include <stdexcept>
#include <string>

namespace eapo {

// Base class for every error the library reports. Callers that only care
// about "did it fail" catch this; the subclasses let tests pin the category.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

class DataError : public Error {
public:
  using Error::Error;
};

class TrainingAborted : public Error {
public:
  using Error::Error;
};

}  // namespace eapo
