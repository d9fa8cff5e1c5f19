#pragma once

#include <set>
#include <string>
#include <vector>

#include "pingmatch/dispatch.hpp"
#include "pingmatch/event_log.hpp"
#include "pingmatch/types.hpp"

namespace pingmatch::testing {

inline TranslatorProfile make_translator(std::string id, std::set<std::string> languages = {"ar", "en"},
                                         int timezone_offset_minutes = 0) {
  TranslatorProfile t;
  t.translator_id = std::move(id);
  t.languages = std::move(languages);
  t.timezone_offset_minutes = timezone_offset_minutes;
  return t;
}

inline TranslationRequest make_request(std::string id, TimestampMs at, std::string source = "ar",
                                       std::string target = "en") {
  TranslationRequest r;
  r.request_id = std::move(id);
  r.requester_id = "u1";
  r.source_language = std::move(source);
  r.target_language = std::move(target);
  r.created_at = at;
  return r;
}

inline std::vector<RankedCandidate> candidates(const std::vector<std::string>& ids) {
  std::vector<RankedCandidate> out;
  for (std::size_t i = 0; i < ids.size(); ++i)
    out.push_back({ids[i], 0.5, false, static_cast<int>(i) + 1});
  return out;
}

// A log with the given translators registered at time 0.
inline EventLog log_with_translators(const std::vector<TranslatorProfile>& translators) {
  EventLog log;
  for (const auto& t : translators) log.append(TranslatorRecord{0, t});
  return log;
}

}  // namespace pingmatch::testing
