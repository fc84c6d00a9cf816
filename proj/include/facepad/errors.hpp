#pragma once

#include <stdexcept>
#include <string>

namespace facepad {

// Base of all library errors. The CLI maps ConfigError/ModeError to exit
// code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define FACEPAD_DEFINE_ERROR(Name)          \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  };

FACEPAD_DEFINE_ERROR(DimensionError)
FACEPAD_DEFINE_ERROR(GeometryError)
FACEPAD_DEFINE_ERROR(PreconditionError)
FACEPAD_DEFINE_ERROR(EncodingError)
FACEPAD_DEFINE_ERROR(InsufficientDataError)
FACEPAD_DEFINE_ERROR(ModelCompatibilityError)
FACEPAD_DEFINE_ERROR(DegenerateGeometryError)
FACEPAD_DEFINE_ERROR(TrainingError)
FACEPAD_DEFINE_ERROR(MetricsError)
FACEPAD_DEFINE_ERROR(VisibilityError)
FACEPAD_DEFINE_ERROR(FormatError)
FACEPAD_DEFINE_ERROR(ManifestError)
FACEPAD_DEFINE_ERROR(ConfigError)
FACEPAD_DEFINE_ERROR(ModeError)

#undef FACEPAD_DEFINE_ERROR

}  // namespace facepad
