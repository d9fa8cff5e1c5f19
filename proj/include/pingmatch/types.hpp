#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace pingmatch {

// Integer milliseconds since the UTC epoch. The engine never reads the wall
// clock on its own; callers inject time.
using TimestampMs = std::int64_t;

using TranslatorId = std::string;
using RequestId = std::string;
using PingId = std::string;
using LanguageCode = std::string;

enum class GenderIdentity { Female, Male, NonBinary, Other };

std::string_view to_string(GenderIdentity g);
std::optional<GenderIdentity> parse_gender(std::string_view s);

enum class Response { Yes, No, Null };

std::string_view to_string(Response r);
std::optional<Response> parse_response(std::string_view s);

// Explicit answers a translator can send. Silence is not an answer.
enum class Answer { Yes, No };

inline Response to_response(Answer a) {
  return a == Answer::Yes ? Response::Yes : Response::No;
}

struct TranslatorProfile {
  TranslatorId translator_id;
  std::set<LanguageCode> languages;
  int timezone_offset_minutes = 0;
  int experience_level = 0;
  bool can_translate_documents = false;
  bool declared_available = false;
  bool multi_skill = false;
  std::optional<GenderIdentity> gender_identity;
  std::set<std::string> occupations;

  bool operator==(const TranslatorProfile&) const = default;
};

// Throws Error(InvariantViolation) naming the offending field.
void validate(const TranslatorProfile& profile);

struct RequestPreferences {
  std::optional<GenderIdentity> gender_identity;
  std::optional<std::string> occupation;

  bool empty() const { return !gender_identity && !occupation; }
  bool operator==(const RequestPreferences&) const = default;
};

struct TranslationRequest {
  RequestId request_id;
  std::string requester_id;
  LanguageCode source_language;
  LanguageCode target_language;
  TimestampMs created_at = 0;
  RequestPreferences preferences;

  std::string language_pair() const { return source_language + "-" + target_language; }
  bool operator==(const TranslationRequest&) const = default;
};

void validate(const TranslationRequest& request);

// A notification as it is sent. Its outcome arrives later as ResponseRecord
// and is finalized by the request's ResolutionRecord.
struct PingRecord {
  PingId ping_id;
  RequestId request_id;
  TranslatorId translator_id;
  TimestampMs sent_at = 0;
  bool exploration = false;
  std::int64_t ping_index = 0;

  bool operator==(const PingRecord&) const = default;
};

struct ResponseRecord {
  PingId ping_id;
  Answer answer = Answer::No;
  TimestampMs responded_at = 0;
  // Arrived after the request left the Open state; recorded but inert.
  bool late = false;

  bool operator==(const ResponseRecord&) const = default;
};

struct PingLabel {
  PingId ping_id;
  Response response = Response::Null;
  std::optional<TimestampMs> responded_at;

  bool operator==(const PingLabel&) const = default;
};

enum class RequestState { Open, Matched, Expired };

std::string_view to_string(RequestState s);

struct ResolutionRecord {
  RequestId request_id;
  TimestampMs resolved_at = 0;
  RequestState state = RequestState::Expired;
  std::optional<TranslatorId> matched_translator_id;
  std::optional<TimestampMs> matched_at;
  std::vector<PingLabel> labels;

  std::optional<TimestampMs> match_time_ms(TimestampMs created_at) const {
    if (!matched_at) return std::nullopt;
    return *matched_at - created_at;
  }
  bool operator==(const ResolutionRecord&) const = default;
};

// A translator joining the pool. Profiles are static once registered.
struct TranslatorRecord {
  TimestampMs registered_at = 0;
  TranslatorProfile profile;

  bool operator==(const TranslatorRecord&) const = default;
};

struct RequestRecord {
  TranslationRequest request;
  TimestampMs deadline = 0;  // created_at + dispatch timeout

  bool operator==(const RequestRecord&) const = default;
};

using Record = std::variant<TranslatorRecord, RequestRecord, PingRecord, ResponseRecord,
                            ResolutionRecord>;

TimestampMs timestamp_of(const Record& record);
std::string_view kind_of(const Record& record);

// Full view of one ping after its request resolved.
struct PingEvent {
  PingRecord ping;
  Response response = Response::Null;
  std::optional<TimestampMs> responded_at;
};

}  // namespace pingmatch
