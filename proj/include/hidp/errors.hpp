#pragma once

#include <stdexcept>
#include <string>

namespace hidp {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define HIDP_DEFINE_ERROR(Name)                                               \
  class Name : public Error {                                                 \
  public:                                                                     \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {}      \
  }

HIDP_DEFINE_ERROR(ParseError);
HIDP_DEFINE_ERROR(ValidationError);
HIDP_DEFINE_ERROR(GeometryError);
HIDP_DEFINE_ERROR(RangeError);
HIDP_DEFINE_ERROR(DomainError);
HIDP_DEFINE_ERROR(LengthError);
HIDP_DEFINE_ERROR(CoverageError);
HIDP_DEFINE_ERROR(AvailabilityError);
HIDP_DEFINE_ERROR(NoTargetError);
HIDP_DEFINE_ERROR(SizeError);
HIDP_DEFINE_ERROR(ProtocolError);
HIDP_DEFINE_ERROR(BusyError);
HIDP_DEFINE_ERROR(FrameError);
HIDP_DEFINE_ERROR(IncompleteError);
HIDP_DEFINE_ERROR(OverlapError);
HIDP_DEFINE_ERROR(DuplicateIdError);
HIDP_DEFINE_ERROR(ConfigError);
HIDP_DEFINE_ERROR(IoError);

#undef HIDP_DEFINE_ERROR

}  // namespace hidp
