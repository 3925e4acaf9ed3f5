#pragma once

#include <stdexcept>
#include <string>

namespace twinflow {

// Base for every error raised by the library. Callers that only care about
// "something went wrong" catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated a documented precondition (bad shape, out-of-range time, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(long step, double base, double adv, double rectify);

  long step() const noexcept { return step_; }
  double base() const noexcept { return base_; }
  double adv() const noexcept { return adv_; }
  double rectify() const noexcept { return rectify_; }

 private:
  long step_;
  double base_;
  double adv_;
  double rectify_;
};

}  // namespace twinflow
