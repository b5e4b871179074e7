#ifndef MFCRL_ERRORS_HPP_
#define MFCRL_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace mfcrl {

// Base of every error thrown by the library. Each subclass names one failure
// kind so callers can dispatch without parsing messages.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MFCRL_DEFINE_ERROR(Name)                       \
  class Name : public Error {                          \
   public:                                             \
    explicit Name(const std::string& what)             \
        : Error(std::string(#Name ": ") + what) {}     \
  }

MFCRL_DEFINE_ERROR(InvalidArgument);
MFCRL_DEFINE_ERROR(MalformedRegion);
MFCRL_DEFINE_ERROR(AmbiguousSuccessor);
MFCRL_DEFINE_ERROR(IncompleteParams);
MFCRL_DEFINE_ERROR(NoPath);
MFCRL_DEFINE_ERROR(Infeasible);
MFCRL_DEFINE_ERROR(StartOutsideEntry);
MFCRL_DEFINE_ERROR(InvalidAlpha);
MFCRL_DEFINE_ERROR(MissingPolicy);
MFCRL_DEFINE_ERROR(UnmappedState);
MFCRL_DEFINE_ERROR(MissingEstimate);
MFCRL_DEFINE_ERROR(ConfigError);
MFCRL_DEFINE_ERROR(PolicyFormatError);
MFCRL_DEFINE_ERROR(IoError);

#undef MFCRL_DEFINE_ERROR

}  // namespace mfcrl

#endif  // MFCRL_ERRORS_HPP_
