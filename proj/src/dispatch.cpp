#include "pingmatch/dispatch.hpp"

#include <algorithm>
#include <functional>

#include "pingmatch/error.hpp"

namespace pingmatch {

double median(std::vector<TimestampMs> values) {
  if (values.empty()) throw Error(ErrorCode::NoData, "median of no values");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return static_cast<double>(values[mid]);
  return (static_cast<double>(values[mid - 1]) + static_cast<double>(values[mid])) / 2.0;
}

MetricsSummary metrics_summary(const MatchMetrics& metrics) {
  if (metrics.requests_total == 0) throw Error(ErrorCode::NoData, "no resolved requests");
  MetricsSummary s;
  s.match_rate = static_cast<double>(metrics.requests_matched) /
                 static_cast<double>(metrics.requests_total);
  if (!metrics.match_times_ms.empty()) s.median_match_time_ms = median(metrics.match_times_ms);
  return s;
}

std::string ping_id_for(const RequestId& request_id, std::size_t slot) {
  return request_id + "-p" + std::to_string(slot + 1);
}

const ActiveRequest& Dispatcher::open_request(const TranslationRequest& request,
                                              std::span<const RankedCandidate> selected,
                                              TimestampMs now, TimestampMs timeout_ms) {
  if (active_.count(request.request_id) || resolved_.count(request.request_id) ||
      log_.request(request.request_id))
    throw Error(ErrorCode::DuplicateRequest, "request '" + request.request_id + "' already opened");
  if (timeout_ms < 0) throw Error(ErrorCode::ConfigInvalid, "timeout_ms must be >= 0");
  if (now < request.created_at)
    throw Error(ErrorCode::InvariantViolation, "pings cannot precede the request");

  ActiveRequest active;
  active.request = request;
  active.deadline = request.created_at + timeout_ms;
  active.opened_order = opened_++;

  log_.append(RequestRecord{request, active.deadline});
  for (std::size_t slot = 0; slot < selected.size(); ++slot) {
    PingRecord ping;
    ping.ping_id = ping_id_for(request.request_id, slot);
    ping.request_id = request.request_id;
    ping.translator_id = selected[slot].translator_id;
    ping.sent_at = now;
    ping.exploration = selected[slot].explored;
    ping.ping_index = log_.next_ping_index(ping.translator_id);
    log_.append(ping);
    active.pings.push_back({ping.ping_id, ping.translator_id, now, std::nullopt, std::nullopt});
  }
  auto [it, _] = active_.emplace(request.request_id, std::move(active));
  return it->second;
}

ResponseResult Dispatcher::handle_response(const PingId& ping_id, Answer answer, TimestampMs at) {
  const PingRecord* ping = log_.ping(ping_id);
  if (!ping) throw Error(ErrorCode::UnknownPing, "unknown ping '" + ping_id + "'");

  ResponseResult result;
  result.request_id = ping->request_id;  // ping dangles once the log grows

  auto it = active_.find(result.request_id);
  if (it == active_.end()) {
    log_.append(ResponseRecord{ping_id, answer, at, true});
    auto done = resolved_.find(result.request_id);
    if (done != resolved_.end()) {
      result.state = done->second;
    } else if (const ResolutionRecord* res = log_.resolution(result.request_id)) {
      result.state = res->state;
    } else {
      throw Error(ErrorCode::UnknownRequest, "request of ping '" + ping_id + "' is not tracked");
    }
    result.late = true;
    return result;
  }

  ActiveRequest& req = it->second;
  auto slot = std::find_if(req.pings.begin(), req.pings.end(),
                           [&](const OutstandingPing& p) { return p.ping_id == ping_id; });

  bool late = false;
  if (at > req.deadline) {
    if (req.state == RequestState::Open) req.state = RequestState::Expired;
    late = true;
  } else if (slot->answer) {
    late = true;  // a ping is answered once
  } else {
    slot->answer = answer;
    slot->responded_at = at;
    if (req.state == RequestState::Open && answer == Answer::Yes) {
      req.state = RequestState::Matched;
      req.matched_translator_id = slot->translator_id;
      req.matched_at = at;
      result.matched_now = true;
    } else if (req.state != RequestState::Open) {
      late = true;
    }
  }
  log_.append(ResponseRecord{ping_id, answer, at, late});
  result.state = req.state;
  result.late = late;
  return result;
}

MatchOutcome Dispatcher::resolve(const RequestId& request_id, TimestampMs now) {
  if (resolved_.count(request_id))
    throw Error(ErrorCode::AlreadyResolved, "request '" + request_id + "' already resolved");
  auto it = active_.find(request_id);
  if (it == active_.end())
    throw Error(ErrorCode::UnknownRequest, "request '" + request_id + "' is not open");
  ActiveRequest& req = it->second;
  if (now < req.deadline && req.state != RequestState::Matched)
    throw Error(ErrorCode::NotDue, "request '" + request_id + "' is open until " +
                                       std::to_string(req.deadline));
  if (req.state == RequestState::Open) req.state = RequestState::Expired;

  ResolutionRecord res;
  res.request_id = request_id;
  res.resolved_at = now;
  res.state = req.state;
  res.matched_translator_id = req.matched_translator_id;
  res.matched_at = req.matched_at;
  for (const auto& p : req.pings) {
    PingLabel label{p.ping_id, Response::Null, std::nullopt};
    if (p.answer) {
      label.response = to_response(*p.answer);
      label.responded_at = p.responded_at;
    }
    res.labels.push_back(std::move(label));
  }
  log_.append(res);

  MatchOutcome outcome;
  outcome.request_id = request_id;
  outcome.matched_translator_id = req.matched_translator_id;
  outcome.match_time_ms = res.match_time_ms(req.request.created_at);

  ++metrics_.requests_total;
  auto& window = metrics_.per_window[(req.request.created_at / kMetricsWindowMs) * kMetricsWindowMs];
  ++window.requests;
  if (outcome.match_time_ms) {
    ++metrics_.requests_matched;
    ++window.matched;
    metrics_.match_times_ms.push_back(*outcome.match_time_ms);
  }

  resolved_.emplace(request_id, req.state);
  active_.erase(it);
  outcome.resolution = std::move(res);
  return outcome;
}

std::vector<MatchOutcome> Dispatcher::resolve_due(TimestampMs now) {
  std::vector<const ActiveRequest*> due;
  for (const auto& [_, req] : active_)
    if (req.deadline <= now) due.push_back(&req);
  std::sort(due.begin(), due.end(), [](const ActiveRequest* a, const ActiveRequest* b) {
    if (a->deadline != b->deadline) return a->deadline < b->deadline;
    return a->opened_order < b->opened_order;
  });
  std::vector<RequestId> ids;
  for (const auto* req : due) ids.push_back(req->request.request_id);

  std::vector<MatchOutcome> out;
  for (const auto& id : ids) out.push_back(resolve(id, std::max(now, active_.at(id).deadline)));
  return out;
}

const ActiveRequest* Dispatcher::active(const RequestId& request_id) const {
  auto it = active_.find(request_id);
  return it == active_.end() ? nullptr : &it->second;
}

std::optional<RequestState> Dispatcher::state_of(const RequestId& request_id) const {
  if (auto it = active_.find(request_id); it != active_.end()) return it->second.state;
  if (auto it = resolved_.find(request_id); it != resolved_.end()) return it->second;
  return std::nullopt;
}

std::optional<TimestampMs> Dispatcher::next_deadline() const {
  std::optional<TimestampMs> next;
  for (const auto& [_, req] : active_)
    if (!next || req.deadline < *next) next = req.deadline;
  return next;
}

void replay_into(Dispatcher& dispatcher, const EventLog& source,
                 const std::function<void(const MatchOutcome&, const ResolutionRecord&)>&
                     on_resolution) {
  if (!dispatcher.log().empty())
    throw Error(ErrorCode::InvariantViolation, "replay target log must start empty");
  const auto& records = source.records();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Record& record = records[i];
    if (const auto* t = std::get_if<TranslatorRecord>(&record)) {
      dispatcher.append_translator(*t);
    } else if (const auto* r = std::get_if<RequestRecord>(&record)) {
      // The request's pings follow it directly, all sent at the same instant.
      std::vector<RankedCandidate> selected;
      TimestampMs sent_at = r->request.created_at;
      std::size_t j = i + 1;
      for (; j < records.size(); ++j) {
        const auto* p = std::get_if<PingRecord>(&records[j]);
        if (!p || p->request_id != r->request.request_id) break;
        sent_at = p->sent_at;
        selected.push_back({p->translator_id, 0.5, p->exploration,
                            static_cast<int>(selected.size()) + 1});
      }
      dispatcher.open_request(r->request, selected, sent_at, r->deadline - r->request.created_at);
      i = j - 1;
    } else if (std::holds_alternative<PingRecord>(record)) {
      throw Error(ErrorCode::InvariantViolation,
                  "replay: ping at record " + std::to_string(i) + " does not follow its request");
    } else if (const auto* resp = std::get_if<ResponseRecord>(&record)) {
      dispatcher.handle_response(resp->ping_id, resp->answer, resp->responded_at);
    } else if (const auto* res = std::get_if<ResolutionRecord>(&record)) {
      const MatchOutcome outcome = dispatcher.resolve(res->request_id, res->resolved_at);
      if (on_resolution) on_resolution(outcome, *res);
    }
  }
}

ReplayReport replay(const EventLog& log) {
  EventLog fresh;
  Dispatcher dispatcher(fresh);
  ReplayReport report;
  replay_into(dispatcher, log, [&](const MatchOutcome& outcome, const ResolutionRecord& original) {
    ++report.resolutions;
    const std::string stored = to_json_line(original);
    const std::string replayed = to_json_line(outcome.resolution);
    if (stored != replayed) {
      if (report.mismatches == 0) report.first_mismatch = {stored, replayed};
      ++report.mismatches;
    }
  });
  return report;
}

}  // namespace pingmatch
