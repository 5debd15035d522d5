#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fractal {

enum class Errc {
  InvalidArgument,
  PermissionDenied,
  MergeConflict,
  DuplicateExactRule,
  DuplicateGroup,
  NoSuchGroup,
  NoSuchBucket,
  BucketStillDraining,
  NoLiveBucket,
  DuplicateKey,
  NoSuchPort,
  ModeChangeAfterTraffic,
  NoCapacity,
  NotRunning,
  NotHalting,
  Retry,
  InvocationPending,
  Malformed,
  SchedulePast,
  NotFound,
  BootFailed,
  InvariantViolation,
};

std::string_view errc_name(Errc code);
// Every code, in declaration order.
const std::vector<Errc>& all_errc();

// All module failures surface as this exception; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace fractal
