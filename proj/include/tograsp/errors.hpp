#pragma once

#include <stdexcept>
#include <string>

namespace tograsp {

// Base of every error thrown by the library. The CLI maps ValidationError to
// exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

#define TOGRASP_DEFINE_ERROR(Name, Base)  \
  class Name : public Base {              \
   public:                                \
    using Base::Base;                     \
  };

TOGRASP_DEFINE_ERROR(DegenerateRotation, Error)
TOGRASP_DEFINE_ERROR(DimensionMismatch, Error)
TOGRASP_DEFINE_ERROR(NonWatertightMesh, Error)
TOGRASP_DEFINE_ERROR(DegenerateHull, Error)
TOGRASP_DEFINE_ERROR(EmptyCloud, Error)
TOGRASP_DEFINE_ERROR(EmptyText, Error)
TOGRASP_DEFINE_ERROR(EmptyInput, Error)
TOGRASP_DEFINE_ERROR(NonFiniteLoss, Error)
TOGRASP_DEFINE_ERROR(InvalidRange, ValidationError)
TOGRASP_DEFINE_ERROR(MissingSurface, Error)
TOGRASP_DEFINE_ERROR(NoCompatibleTemplate, Error)
TOGRASP_DEFINE_ERROR(MalformedTemplate, ValidationError)
TOGRASP_DEFINE_ERROR(NoSeedGrasps, Error)
TOGRASP_DEFINE_ERROR(QuotaUnsatisfiable, Error)
TOGRASP_DEFINE_ERROR(ParseError, ValidationError)

#undef TOGRASP_DEFINE_ERROR

}  // namespace tograsp
