#pragma once

#include <stdexcept>
#include <string>

namespace sedattack {

// Base for every error this library raises. The CLI maps ValidationError to
// exit status 1 and everything else to 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input such as unknown config keys or out-of-range arguments.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (WAV headers, checkpoints, sidecars).
class FormatError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite losses and undefined numeric quantities.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace sedattack
