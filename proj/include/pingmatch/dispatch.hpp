#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pingmatch/event_log.hpp"
#include "pingmatch/matcher.hpp"
#include "pingmatch/types.hpp"

namespace pingmatch {

inline constexpr TimestampMs kDefaultTimeoutMs = 120'000;
inline constexpr TimestampMs kMetricsWindowMs = 3'600'000;

struct OutstandingPing {
  PingId ping_id;
  TranslatorId translator_id;
  TimestampMs sent_at = 0;
  // First answer received on or before the deadline.
  std::optional<Answer> answer;
  std::optional<TimestampMs> responded_at;
};

struct ActiveRequest {
  TranslationRequest request;
  TimestampMs deadline = 0;
  RequestState state = RequestState::Open;
  std::optional<TranslatorId> matched_translator_id;
  std::optional<TimestampMs> matched_at;
  std::vector<OutstandingPing> pings;
  std::uint64_t opened_order = 0;
};

struct WindowAggregate {
  std::int64_t requests = 0;
  std::int64_t matched = 0;
};

struct MatchMetrics {
  std::int64_t requests_total = 0;
  std::int64_t requests_matched = 0;
  std::vector<TimestampMs> match_times_ms;
  std::map<TimestampMs, WindowAggregate> per_window;  // keyed by hour-window start
};

struct MetricsSummary {
  double match_rate = 0.0;
  std::optional<double> median_match_time_ms;  // absent with zero matches
};

// Throws NoData when no request has resolved.
MetricsSummary metrics_summary(const MatchMetrics& metrics);

// Even count -> mean of the middle two. Throws NoData on empty input.
double median(std::vector<TimestampMs> values);

struct MatchOutcome {
  RequestId request_id;
  std::optional<TranslatorId> matched_translator_id;
  std::optional<TimestampMs> match_time_ms;
  ResolutionRecord resolution;
};

struct ResponseResult {
  RequestId request_id;
  RequestState state = RequestState::Open;
  bool matched_now = false;
  bool late = false;
};

// Ping lifecycle: open -> answers -> resolve. Every transition is appended to
// the log it was constructed with; time is always supplied by the caller.
class Dispatcher {
 public:
  explicit Dispatcher(EventLog& log) : log_(log) {}

  void append_translator(const TranslatorRecord& record) { log_.append(record); }

  // Appends the request record and one ping per selected candidate at `now`.
  // Throws DuplicateRequest.
  const ActiveRequest& open_request(const TranslationRequest& request,
                                    std::span<const RankedCandidate> selected, TimestampMs now,
                                    TimestampMs timeout_ms = kDefaultTimeoutMs);

  // First in-time Yes wins. Answers after the match, after the deadline, or
  // after resolution are logged with late=true and never change state.
  // Throws UnknownPing.
  ResponseResult handle_response(const PingId& ping_id, Answer answer, TimestampMs at);

  // Emits final labels and the resolution record. Requires now >= deadline
  // unless already matched. Throws AlreadyResolved, NotDue, UnknownRequest.
  MatchOutcome resolve(const RequestId& request_id, TimestampMs now);

  // Resolves every open request whose deadline is <= now, earliest first.
  std::vector<MatchOutcome> resolve_due(TimestampMs now);

  const ActiveRequest* active(const RequestId& request_id) const;
  std::optional<RequestState> state_of(const RequestId& request_id) const;
  std::optional<TimestampMs> next_deadline() const;
  std::size_t active_count() const { return active_.size(); }
  const MatchMetrics& metrics() const { return metrics_; }
  const EventLog& log() const { return log_; }

 private:
  EventLog& log_;
  std::unordered_map<RequestId, ActiveRequest> active_;
  std::unordered_map<RequestId, RequestState> resolved_;
  MatchMetrics metrics_;
  std::uint64_t opened_ = 0;
};

std::string ping_id_for(const RequestId& request_id, std::size_t slot);

struct ReplayReport {
  std::size_t resolutions = 0;
  std::size_t mismatches = 0;
  std::vector<std::string> first_mismatch;  // {original, replayed} when any
  bool identical() const { return mismatches == 0; }
};

// Feeds a log's records through `dispatcher` (whose log must start empty),
// rebuilding its state; on_resolution sees each regenerated outcome next to
// the stored record.
void replay_into(Dispatcher& dispatcher, const EventLog& source,
                 const std::function<void(const MatchOutcome&, const ResolutionRecord&)>&
                     on_resolution = {});

// Re-runs the dispatch state machine over the log's requests, pings, and
// responses, resolving at the recorded times, and compares each regenerated
// resolution line byte-for-byte with the stored one.
ReplayReport replay(const EventLog& log);

}  // namespace pingmatch
