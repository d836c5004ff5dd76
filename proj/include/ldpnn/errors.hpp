#pragma once

#include <stdexcept>
#include <string>

namespace ldpnn {

struct NotPsdError : std::runtime_error {
  explicit NotPsdError(const std::string& what) : std::runtime_error(what) {}
};

struct DimensionMismatchError : std::runtime_error {
  explicit DimensionMismatchError(const std::string& what)
      : std::runtime_error(what) {}
};

struct UnknownActivationError : std::runtime_error {
  explicit UnknownActivationError(const std::string& name)
      : std::runtime_error("unknown activation: " + name) {}
};

struct NonConvergenceError : std::runtime_error {
  NonConvergenceError(const std::string& what, double grad_norm_, int iters_)
      : std::runtime_error(what), grad_norm(grad_norm_), iters(iters_) {}
  double grad_norm;
  int iters;
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ldpnn
