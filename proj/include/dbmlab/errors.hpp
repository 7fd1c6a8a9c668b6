#pragma once

#include <stdexcept>
#include <string>

namespace dbm {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Transform evaluated on a singular point (atom hit, pole on the axis).
class SingularEvaluation : public Error {
 public:
  using Error::Error;
};

// Malformed measure, spec, matrix or configuration.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  explicit ValidationError(const std::string& what) : Error(what) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (last residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class MassLossError : public Error {
 public:
  MassLossError(const std::string& what, double deficit)
      : Error(what + " (deficit " + std::to_string(deficit) + ")"), deficit_(deficit) {}
  double deficit() const { return deficit_; }

 private:
  double deficit_;
};

class CollisionError : public Error {
 public:
  CollisionError(int i, int j, double t)
      : Error("particles " + std::to_string(i) + " and " + std::to_string(j) +
              " collided at t=" + std::to_string(t)),
        i_(i), j_(j), t_(t) {}
  int first() const { return i_; }
  int second() const { return j_; }
  double time() const { return t_; }

 private:
  int i_, j_;
  double t_;
};

class ContainmentError : public Error {
 public:
  using Error::Error;
};

class StepSizeError : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

}  // namespace dbm
