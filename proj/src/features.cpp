#include "pingmatch/features.hpp"

#include <stdexcept>
#include <string>

#include "pingmatch/error.hpp"

namespace pingmatch {

namespace {

void check_hour(int hour) {
  if (hour < 0 || hour >= kHoursPerDay)
    throw Error(ErrorCode::InvariantViolation, "hour " + std::to_string(hour) + " outside 0..23");
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

double smoothed_rate(const RateCounter& counter) {
  return (static_cast<double>(counter.yes_count) + 1.0) /
         (static_cast<double>(counter.ping_count) + 2.0);
}

double overall_rate(const ResponseStats& stats) { return smoothed_rate(stats.overall); }

double periodic_rate(const ResponseStats& stats, int hour) {
  check_hour(hour);
  return smoothed_rate(stats.hourly[static_cast<std::size_t>(hour)]);
}

ResponseStats update_stats(ResponseStats stats, bool label, int hour) {
  check_hour(hour);
  auto& bucket = stats.hourly[static_cast<std::size_t>(hour)];
  ++stats.overall.ping_count;
  ++bucket.ping_count;
  if (label) {
    ++stats.overall.yes_count;
    ++bucket.yes_count;
  }
  return stats;
}

int local_hour(TimestampMs at, int timezone_offset_minutes) {
  const std::int64_t local_minutes = floor_div(at, 60'000) + timezone_offset_minutes;
  const std::int64_t hour = floor_div(local_minutes, 60) % kHoursPerDay;
  return static_cast<int>(hour < 0 ? hour + kHoursPerDay : hour);
}

FeatureVector feature_vector(const TranslatorProfile& profile, const ResponseStats& stats,
                             int hour) {
  FeatureVector x{};
  x[kOverallRate] = overall_rate(stats);
  x[kPeriodicRate] = periodic_rate(stats, hour);
  x[kExperience] = static_cast<double>(profile.experience_level);
  x[kDocuments] = profile.can_translate_documents ? 1.0 : 0.0;
  x[kAvailable] = profile.declared_available ? 1.0 : 0.0;
  x[kMultiSkill] = profile.multi_skill ? 1.0 : 0.0;
  return x;
}

void validate(const ResponseStats& stats) {
  auto check = [](const RateCounter& c) {
    if (c.yes_count < 0 || c.yes_count > c.ping_count)
      throw Error(ErrorCode::InvariantViolation, "yes_count outside [0, ping_count]");
  };
  check(stats.overall);
  std::int64_t hourly_total = 0;
  for (const auto& bucket : stats.hourly) {
    check(bucket);
    hourly_total += bucket.ping_count;
  }
  if (hourly_total != stats.overall.ping_count)
    throw Error(ErrorCode::InvariantViolation, "hourly ping counts do not sum to overall");
}

const ResponseStats& StatsBook::get(const TranslatorId& id) const {
  static const ResponseStats kEmpty{};
  auto it = stats_.find(id);
  return it == stats_.end() ? kEmpty : it->second;
}

void StatsBook::record(const TranslatorId& id, bool label, int hour) {
  auto& stats = stats_[id];
  stats = update_stats(stats, label, hour);
}

}  // namespace pingmatch
