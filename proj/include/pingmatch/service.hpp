#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pingmatch/dispatch.hpp"
#include "pingmatch/error.hpp"
#include "pingmatch/event_log.hpp"
#include "pingmatch/features.hpp"
#include "pingmatch/matcher.hpp"
#include "pingmatch/model.hpp"

namespace pingmatch {

using Clock = std::function<TimestampMs()>;

// Wall-clock milliseconds since the Unix epoch.
TimestampMs system_clock_ms();

struct EngineOptions {
  MatchPolicy policy;
  TimestampMs timeout_ms = kDefaultTimeoutMs;
  // When set, every appended record is also written to this JSONL file.
  std::optional<std::filesystem::path> log_path;
};

struct SubmitResult {
  RequestId request_id;
  std::vector<PingId> ping_ids;
  TimestampMs deadline = 0;
};

struct PingStatus {
  PingId ping_id;
  TranslatorId translator_id;
  Response response = Response::Null;
  std::optional<TimestampMs> responded_at;
};

struct RequestStatus {
  TranslationRequest request;
  RequestState state = RequestState::Open;
  TimestampMs deadline = 0;
  bool resolved = false;
  std::optional<TranslatorId> matched_translator_id;
  std::optional<TimestampMs> matched_at;
  std::vector<PingStatus> pings;
};

struct MetricsSnapshot {
  MatchMetrics metrics;
  std::optional<MetricsSummary> summary;  // absent until a request resolves
  std::size_t open_requests = 0;
};

// Live matching engine. Every public call is serialized on one mutex, so
// reads see a consistent snapshot and a model swap lands between requests.
// Overdue requests are resolved lazily at the start of each call.
class Engine {
 public:
  explicit Engine(EngineOptions options = {}, Clock clock = system_clock_ms);

  // Rebuilds state from an existing log (translators, open and resolved
  // requests, stats). The engine must be fresh.
  void restore(const EventLog& log);

  void register_translator(const TranslatorProfile& profile);

  // Filter, rank, select, open. A missing request_id is assigned. Throws
  // ValidationError, DuplicateRequest, ModelMissing.
  SubmitResult submit_request(TranslationRequest request);

  // Throws UnknownPing.
  ResponseResult submit_response(const PingId& ping_id, Answer answer);

  // Throws UnknownRequest.
  RequestStatus get_request(const RequestId& request_id);

  MetricsSnapshot get_metrics();

  // Throws FeatureOrderMismatch or InvariantViolation for a malformed model.
  void put_model(ResponseModel model);
  std::shared_ptr<const ResponseModel> model() const;

  // Resolves overdue requests at the current clock reading.
  std::size_t tick();

  EventLog log_snapshot() const;
  std::size_t translator_count() const;

 private:
  TimestampMs now_locked() const;
  void resolve_due_locked(TimestampMs now);
  void persist_locked();

  mutable std::mutex mutex_;
  EngineOptions options_;
  Clock clock_;
  EventLog log_;
  Dispatcher dispatcher_{log_};
  StatsBook stats_;
  std::vector<TranslatorProfile> profiles_;
  std::shared_ptr<const ResponseModel> model_;
  Rng rng_;
  std::uint64_t next_request_number_ = 1;
  std::size_t persisted_ = 0;
  std::ofstream sink_;
};

// --- wire layer -------------------------------------------------------------

struct ApiResponse {
  int status = 200;
  std::string body;  // JSON document
};

// Routes one HTTP call:
//   POST /translators
//   POST /requests
//   POST /pings/{ping_id}/response
//   GET  /requests/{request_id}
//   GET  /metrics
//   PUT  /model
// Errors carry {"error": {"code", "message", "field"?}}.
ApiResponse handle(Engine& engine, std::string_view method, std::string_view path,
                   std::string_view body);

int http_status_for(ErrorCode code);

// Thin HTTP front end over handle().
class HttpService {
 public:
  explicit HttpService(Engine& engine);
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  // Returns the bound port; port 0 picks a free one. Throws Io.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace pingmatch
