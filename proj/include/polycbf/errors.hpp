#pragma once

#include <stdexcept>
#include <string>

namespace polycbf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// geometry
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

// sdf
class OriginInside : public Error {
 public:
  using Error::Error;
};
class OriginOutside : public Error {
 public:
  using Error::Error;
};

// diffopt. All three mark a configuration on the measure-zero set where the
// barrier gradient is not defined; the controller treats them identically.
class GradientUndefined : public Error {
 public:
  using Error::Error;
};
class ActiveSetChange : public GradientUndefined {
 public:
  using GradientUndefined::GradientUndefined;
};
class SingularKkt : public GradientUndefined {
 public:
  using GradientUndefined::GradientUndefined;
};
class ContactSingularity : public GradientUndefined {
 public:
  using GradientUndefined::GradientUndefined;
};

// qpsolver
class IterationLimit : public Error {
 public:
  using Error::Error;
};

// dynamics
class NonFiniteState : public Error {
 public:
  using Error::Error;
};

// controller
class GoalSingularity : public Error {
 public:
  using Error::Error;
};
class SafetyFilterFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace polycbf
