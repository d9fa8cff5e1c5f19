#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <unordered_map>

#include "pingmatch/types.hpp"

namespace pingmatch {

inline constexpr int kHoursPerDay = 24;
inline constexpr std::size_t kFeatureCount = 6;

// Canonical feature order shared with ResponseModel and the model file.
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "overall_response_rate", "periodic_response_rate", "experience_level",
    "can_translate_documents", "declared_available", "multi_skill"};

enum FeatureIndex : std::size_t {
  kOverallRate = 0,
  kPeriodicRate = 1,
  kExperience = 2,
  kDocuments = 3,
  kAvailable = 4,
  kMultiSkill = 5,
};

struct RateCounter {
  std::int64_t yes_count = 0;
  std::int64_t ping_count = 0;

  bool operator==(const RateCounter&) const = default;
};

// Response history of one translator: everything before the ping being scored.
struct ResponseStats {
  RateCounter overall;
  std::array<RateCounter, kHoursPerDay> hourly{};

  bool operator==(const ResponseStats&) const = default;
};

using FeatureVector = std::array<double, kFeatureCount>;

// Add-one smoothed rate: (yes + 1) / (pings + 2). Exactly 0.5 with no history.
double smoothed_rate(const RateCounter& counter);

double overall_rate(const ResponseStats& stats);
double periodic_rate(const ResponseStats& stats, int hour);

ResponseStats update_stats(ResponseStats stats, bool label, int hour);

// Local hour of day (0..23) for a UTC timestamp at the given offset.
int local_hour(TimestampMs at, int timezone_offset_minutes);

FeatureVector feature_vector(const TranslatorProfile& profile, const ResponseStats& stats,
                             int hour);

// Throws InvariantViolation if counts are inconsistent.
void validate(const ResponseStats& stats);

// Per-translator stats, updated only when a request resolves so that a ping
// is always scored from outcomes already known at its send time.
class StatsBook {
 public:
  const ResponseStats& get(const TranslatorId& id) const;
  void record(const TranslatorId& id, bool label, int hour);
  std::size_t size() const { return stats_.size(); }

  bool operator==(const StatsBook&) const = default;

 private:
  std::unordered_map<TranslatorId, ResponseStats> stats_;
};

}  // namespace pingmatch
