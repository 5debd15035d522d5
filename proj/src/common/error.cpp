#include "fractal/common/error.hpp"

namespace fractal {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::PermissionDenied: return "PermissionDenied";
    case Errc::MergeConflict: return "MergeConflict";
    case Errc::DuplicateExactRule: return "DuplicateExactRule";
    case Errc::DuplicateGroup: return "DuplicateGroup";
    case Errc::NoSuchGroup: return "NoSuchGroup";
    case Errc::NoSuchBucket: return "NoSuchBucket";
    case Errc::BucketStillDraining: return "BucketStillDraining";
    case Errc::NoLiveBucket: return "NoLiveBucket";
    case Errc::DuplicateKey: return "DuplicateKey";
    case Errc::NoSuchPort: return "NoSuchPort";
    case Errc::ModeChangeAfterTraffic: return "ModeChangeAfterTraffic";
    case Errc::NoCapacity: return "NoCapacity";
    case Errc::NotRunning: return "NotRunning";
    case Errc::NotHalting: return "NotHalting";
    case Errc::Retry: return "Retry";
    case Errc::InvocationPending: return "InvocationPending";
    case Errc::Malformed: return "Malformed";
    case Errc::SchedulePast: return "SchedulePast";
    case Errc::NotFound: return "NotFound";
    case Errc::BootFailed: return "BootFailed";
    case Errc::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

const std::vector<Errc>& all_errc() {
  static const std::vector<Errc> all = [] {
    std::vector<Errc> v;
    for (int i = 0; i <= static_cast<int>(Errc::InvariantViolation); ++i)
      v.push_back(static_cast<Errc>(i));
    return v;
  }();
  return all;
}

}  // namespace fractal
