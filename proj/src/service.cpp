#include "pingmatch/service.hpp"

#include <algorithm>
#include <chrono>

#include <httplib.h>
#include <json.hpp>

#include "pingmatch/error.hpp"

namespace pingmatch {

using nlohmann::json;

TimestampMs system_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

Engine::Engine(EngineOptions options, Clock clock)
    : options_(std::move(options)), clock_(std::move(clock)), rng_(options_.policy.seed) {
  options_.policy.validate();
  if (options_.timeout_ms < 0) throw FieldError(ErrorCode::ConfigInvalid, "timeout_ms", "must be >= 0");
  if (!clock_) throw Error(ErrorCode::ConfigInvalid, "engine needs a clock");
  if (options_.log_path) {
    sink_.open(*options_.log_path, std::ios::app);
    if (!sink_) throw Error(ErrorCode::Io, "cannot open " + options_.log_path->string());
  }
}

TimestampMs Engine::now_locked() const {
  // The log is timestamp-ordered, so a clock that steps backwards is pinned.
  return std::max(clock_(), log_.last_timestamp().value_or(clock_()));
}

void Engine::resolve_due_locked(TimestampMs now) {
  for (const auto& outcome : dispatcher_.resolve_due(now))
    apply_resolution(stats_, log_, outcome.resolution);
}

void Engine::persist_locked() {
  if (!sink_.is_open()) {
    persisted_ = log_.size();
    return;
  }
  const auto& records = log_.records();
  for (; persisted_ < records.size(); ++persisted_) sink_ << to_json_line(records[persisted_]) << '\n';
  sink_.flush();
  if (!sink_) throw Error(ErrorCode::Io, "write to " + options_.log_path->string() + " failed");
}

void Engine::restore(const EventLog& source) {
  std::lock_guard lock(mutex_);
  if (!log_.empty()) throw Error(ErrorCode::InvariantViolation, "restore needs a fresh engine");
  replay_into(dispatcher_, source, [&](const MatchOutcome& outcome, const ResolutionRecord&) {
    apply_resolution(stats_, log_, outcome.resolution);
  });
  profiles_ = log_.translators();
  next_request_number_ = 1;
  for (const auto& record : log_.records())
    if (std::holds_alternative<RequestRecord>(record)) ++next_request_number_;
  // The restored records already live wherever the source came from.
  persisted_ = log_.size();
}

void Engine::register_translator(const TranslatorProfile& profile) {
  std::lock_guard lock(mutex_);
  const TimestampMs now = now_locked();
  resolve_due_locked(now);
  if (log_.translator(profile.translator_id))
    throw FieldError(ErrorCode::ValidationError, "translator_id",
                     "translator '" + profile.translator_id + "' already registered");
  try {
    validate(profile);
  } catch (const Error& e) {
    throw Error(ErrorCode::ValidationError, e.what());
  }
  dispatcher_.append_translator(TranslatorRecord{now, profile});
  profiles_.push_back(profile);
  persist_locked();
}

SubmitResult Engine::submit_request(TranslationRequest request) {
  std::lock_guard lock(mutex_);
  const TimestampMs now = now_locked();
  resolve_due_locked(now);
  persist_locked();
  if (!model_) throw Error(ErrorCode::ModelMissing, "no model loaded; PUT /model first");

  if (request.request_id.empty()) {
    do {
      request.request_id = "q" + std::to_string(next_request_number_++);
    } while (log_.request(request.request_id));
  }
  if (request.source_language.empty())
    throw FieldError(ErrorCode::ValidationError, "source_language", "must not be empty");
  if (request.target_language.empty())
    throw FieldError(ErrorCode::ValidationError, "target_language", "must not be empty");
  if (request.source_language == request.target_language)
    throw FieldError(ErrorCode::ValidationError, "target_language",
                     "must differ from source_language");
  if (log_.request(request.request_id))
    throw Error(ErrorCode::DuplicateRequest, "request '" + request.request_id + "' already exists");
  request.created_at = now;

  const auto eligible = filter_candidates(request, profiles_, now, options_.policy);
  const auto ranked = rank_candidates(eligible, model_.get(), stats_, now);
  const auto selected = select_pings(ranked, options_.policy, rng_);
  const ActiveRequest& active = dispatcher_.open_request(request, selected, now, options_.timeout_ms);

  SubmitResult result;
  result.request_id = request.request_id;
  result.deadline = active.deadline;
  for (const auto& p : active.pings) result.ping_ids.push_back(p.ping_id);
  persist_locked();
  return result;
}

ResponseResult Engine::submit_response(const PingId& ping_id, Answer answer) {
  std::lock_guard lock(mutex_);
  const TimestampMs now = now_locked();
  if (!log_.ping(ping_id)) throw Error(ErrorCode::UnknownPing, "unknown ping '" + ping_id + "'");
  // Answers on the deadline itself still count, so resolve strictly earlier ones.
  resolve_due_locked(now - 1);
  ResponseResult result = dispatcher_.handle_response(ping_id, answer, now);
  persist_locked();
  return result;
}

RequestStatus Engine::get_request(const RequestId& request_id) {
  std::lock_guard lock(mutex_);
  resolve_due_locked(now_locked());
  persist_locked();
  const RequestRecord* record = log_.request_record(request_id);
  if (!record) throw Error(ErrorCode::UnknownRequest, "unknown request '" + request_id + "'");

  RequestStatus status;
  status.request = record->request;
  status.deadline = record->deadline;
  if (const ResolutionRecord* res = log_.resolution(request_id)) {
    status.resolved = true;
    status.state = res->state;
    status.matched_translator_id = res->matched_translator_id;
    status.matched_at = res->matched_at;
    for (const auto& label : res->labels)
      status.pings.push_back(
          {label.ping_id, log_.ping(label.ping_id)->translator_id, label.response, label.responded_at});
  } else if (const ActiveRequest* active = dispatcher_.active(request_id)) {
    status.state = active->state;
    status.matched_translator_id = active->matched_translator_id;
    status.matched_at = active->matched_at;
    for (const auto& p : active->pings) {
      PingStatus ps{p.ping_id, p.translator_id, Response::Null, p.responded_at};
      if (p.answer) ps.response = to_response(*p.answer);
      status.pings.push_back(std::move(ps));
    }
  }
  return status;
}

MetricsSnapshot Engine::get_metrics() {
  std::lock_guard lock(mutex_);
  resolve_due_locked(now_locked());
  persist_locked();
  MetricsSnapshot snap;
  snap.metrics = dispatcher_.metrics();
  if (snap.metrics.requests_total > 0) snap.summary = metrics_summary(snap.metrics);
  snap.open_requests = dispatcher_.active_count();
  return snap;
}

void Engine::put_model(ResponseModel model) {
  validate(model);
  auto fresh = std::make_shared<const ResponseModel>(std::move(model));
  std::lock_guard lock(mutex_);
  model_ = std::move(fresh);
}

std::shared_ptr<const ResponseModel> Engine::model() const {
  std::lock_guard lock(mutex_);
  return model_;
}

std::size_t Engine::tick() {
  std::lock_guard lock(mutex_);
  const std::size_t before = dispatcher_.metrics().requests_total;
  resolve_due_locked(now_locked());
  persist_locked();
  return dispatcher_.metrics().requests_total - before;
}

EventLog Engine::log_snapshot() const {
  std::lock_guard lock(mutex_);
  return log_;
}

std::size_t Engine::translator_count() const {
  std::lock_guard lock(mutex_);
  return profiles_.size();
}

// --- wire layer -------------------------------------------------------------

namespace {

template <typename T>
T field(const json& body, const char* name) {
  try {
    return body.at(name).get<T>();
  } catch (const json::exception&) {
    throw FieldError(ErrorCode::ValidationError, name,
                     body.contains(name) ? "has the wrong type" : "is required");
  }
}

template <typename T>
std::optional<T> optional_field(const json& body, const char* name) {
  if (!body.contains(name) || body.at(name).is_null()) return std::nullopt;
  return field<T>(body, name);
}

void reject_unknown(const json& body, std::initializer_list<const char*> known) {
  if (!body.is_object()) throw Error(ErrorCode::ValidationError, "body must be a JSON object");
  for (const auto& [key, _] : body.items())
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw FieldError(ErrorCode::ValidationError, key, "unknown field");
}

GenderIdentity gender_field(const json& body, const char* name) {
  const auto text = field<std::string>(body, name);
  const auto g = parse_gender(text);
  if (!g) throw FieldError(ErrorCode::ValidationError, name, "unknown value '" + text + "'");
  return *g;
}

json parse_body(std::string_view body) {
  json j = json::parse(body.begin(), body.end(), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::ParseError, "body is not valid JSON");
  return j;
}

TranslatorProfile translator_from_wire(const json& j) {
  reject_unknown(j, {"translator_id", "languages", "timezone_offset_minutes", "experience_level",
                     "can_translate_documents", "declared_available", "multi_skill",
                     "occupations", "gender_identity"});
  TranslatorProfile p;
  p.translator_id = field<std::string>(j, "translator_id");
  p.languages = field<std::set<std::string>>(j, "languages");
  p.timezone_offset_minutes = optional_field<int>(j, "timezone_offset_minutes").value_or(0);
  p.experience_level = optional_field<int>(j, "experience_level").value_or(0);
  p.can_translate_documents = optional_field<bool>(j, "can_translate_documents").value_or(false);
  p.declared_available = optional_field<bool>(j, "declared_available").value_or(false);
  p.multi_skill = optional_field<bool>(j, "multi_skill").value_or(false);
  p.occupations = optional_field<std::set<std::string>>(j, "occupations").value_or(std::set<std::string>{});
  if (j.contains("gender_identity") && !j.at("gender_identity").is_null())
    p.gender_identity = gender_field(j, "gender_identity");
  if (p.translator_id.empty()) throw FieldError(ErrorCode::ValidationError, "translator_id", "must not be empty");
  if (p.languages.empty()) throw FieldError(ErrorCode::ValidationError, "languages", "must not be empty");
  if (p.experience_level < 0 || p.experience_level > 2)
    throw FieldError(ErrorCode::ValidationError, "experience_level", "must be 0, 1 or 2");
  if (p.timezone_offset_minutes < -720 || p.timezone_offset_minutes > 840)
    throw FieldError(ErrorCode::ValidationError, "timezone_offset_minutes", "must be in [-720, 840]");
  return p;
}

TranslationRequest request_from_wire(const json& j) {
  reject_unknown(j, {"request_id", "requester_id", "source_language", "target_language",
                     "preferences"});
  TranslationRequest q;
  q.request_id = optional_field<std::string>(j, "request_id").value_or("");
  q.requester_id = field<std::string>(j, "requester_id");
  q.source_language = field<std::string>(j, "source_language");
  q.target_language = field<std::string>(j, "target_language");
  if (j.contains("preferences") && !j.at("preferences").is_null()) {
    const json& prefs = j.at("preferences");
    if (!prefs.is_object())
      throw FieldError(ErrorCode::ValidationError, "preferences", "must be an object");
    for (const auto& [key, _] : prefs.items())
      if (key != "gender_identity" && key != "occupation")
        throw FieldError(ErrorCode::ValidationError, "preferences." + key, "unknown field");
    if (prefs.contains("gender_identity"))
      q.preferences.gender_identity = gender_field(prefs, "gender_identity");
    q.preferences.occupation = optional_field<std::string>(prefs, "occupation");
  }
  return q;
}

json status_to_wire(const RequestStatus& s) {
  json pings = json::array();
  for (const auto& p : s.pings) {
    json pj = {{"ping_id", p.ping_id},
               {"translator_id", p.translator_id},
               {"response", to_string(p.response)}};
    pj["responded_at"] = p.responded_at ? json(*p.responded_at) : json(nullptr);
    pings.push_back(std::move(pj));
  }
  json j = {{"request_id", s.request.request_id},
            {"requester_id", s.request.requester_id},
            {"source_language", s.request.source_language},
            {"target_language", s.request.target_language},
            {"created_at", s.request.created_at},
            {"deadline", s.deadline},
            {"state", to_string(s.state)},
            {"resolved", s.resolved},
            {"pings", std::move(pings)}};
  j["matched_translator_id"] = s.matched_translator_id ? json(*s.matched_translator_id) : json(nullptr);
  j["matched_at"] = s.matched_at ? json(*s.matched_at) : json(nullptr);
  return j;
}

json metrics_to_wire(const MetricsSnapshot& m) {
  json windows = json::array();
  for (const auto& [start, agg] : m.metrics.per_window)
    windows.push_back({{"window_start", start}, {"requests", agg.requests}, {"matched", agg.matched}});
  json j = {{"requests_total", m.metrics.requests_total},
            {"requests_matched", m.metrics.requests_matched},
            {"open_requests", m.open_requests},
            {"per_window", std::move(windows)}};
  j["match_rate"] = m.summary ? json(m.summary->match_rate) : json(nullptr);
  j["median_match_time_ms"] = m.summary && m.summary->median_match_time_ms
                                  ? json(*m.summary->median_match_time_ms)
                                  : json(nullptr);
  return j;
}

ApiResponse error_response(int status, std::string_view code, const std::string& message,
                           const std::string* field = nullptr) {
  json err = {{"code", code}, {"message", message}};
  if (field) err["field"] = *field;
  return {status, json{{"error", std::move(err)}}.dump()};
}

ApiResponse ok(const json& body, int status = 200) { return {status, body.dump()}; }

std::vector<std::string_view> split_path(std::string_view path) {
  if (auto q = path.find('?'); q != std::string_view::npos) path = path.substr(0, q);
  std::vector<std::string_view> parts;
  while (!path.empty()) {
    if (path.front() == '/') {
      path.remove_prefix(1);
      continue;
    }
    const auto end = path.find('/');
    parts.push_back(path.substr(0, end));
    if (end == std::string_view::npos) break;
    path.remove_prefix(end);
  }
  return parts;
}

ApiResponse route(Engine& engine, std::string_view method, std::string_view path,
                  std::string_view body) {
  const auto parts = split_path(path);
  const bool get = method == "GET";
  const bool post = method == "POST";
  const bool put = method == "PUT";

  if (parts.size() == 1 && parts[0] == "translators") {
    if (!post) return error_response(405, "MethodNotAllowed", "use POST");
    const TranslatorProfile profile = translator_from_wire(parse_body(body));
    engine.register_translator(profile);
    return ok({{"translator_id", profile.translator_id}}, 201);
  }
  if (parts.size() == 1 && parts[0] == "requests") {
    if (!post) return error_response(405, "MethodNotAllowed", "use POST");
    const SubmitResult r = engine.submit_request(request_from_wire(parse_body(body)));
    return ok({{"request_id", r.request_id},
               {"pings_sent", r.ping_ids.size()},
               {"ping_ids", r.ping_ids},
               {"deadline", r.deadline}},
              201);
  }
  if (parts.size() == 2 && parts[0] == "requests") {
    if (!get) return error_response(405, "MethodNotAllowed", "use GET");
    return ok(status_to_wire(engine.get_request(std::string(parts[1]))));
  }
  if (parts.size() == 3 && parts[0] == "pings" && parts[2] == "response") {
    if (!post) return error_response(405, "MethodNotAllowed", "use POST");
    const json j = parse_body(body);
    reject_unknown(j, {"answer"});
    const auto text = field<std::string>(j, "answer");
    if (text != "yes" && text != "no")
      throw FieldError(ErrorCode::ValidationError, "answer", "must be 'yes' or 'no'");
    const ResponseResult r =
        engine.submit_response(std::string(parts[1]), text == "yes" ? Answer::Yes : Answer::No);
    return ok({{"request_id", r.request_id},
               {"state", to_string(r.state)},
               {"matched", r.matched_now},
               {"late", r.late}});
  }
  if (parts.size() == 1 && parts[0] == "metrics") {
    if (!get) return error_response(405, "MethodNotAllowed", "use GET");
    return ok(metrics_to_wire(engine.get_metrics()));
  }
  if (parts.size() == 1 && parts[0] == "model") {
    if (put) {
      engine.put_model(model_from_json(std::string(body)));
      const auto model = engine.model();
      return ok({{"lambda", model->lambda}, {"trained_on", model->trained_on}});
    }
    if (get) {
      const auto model = engine.model();
      if (!model) return error_response(404, "ModelMissing", "no model loaded");
      return {200, model_to_json(*model)};
    }
    return error_response(405, "MethodNotAllowed", "use PUT or GET");
  }
  return error_response(404, "NotFound", "no route for " + std::string(path));
}

}  // namespace

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ValidationError:
    case ErrorCode::ParseError:
    case ErrorCode::InvariantViolation:
    case ErrorCode::VersionMismatch:
    case ErrorCode::FeatureOrderMismatch:
    case ErrorCode::ConfigInvalid:
      return 400;
    case ErrorCode::UnknownPing:
    case ErrorCode::UnknownRequest:
      return 404;
    case ErrorCode::DuplicateRequest:
    case ErrorCode::AlreadyResolved:
      return 409;
    case ErrorCode::ModelMissing:
      return 503;
    default:
      return 500;
  }
}

ApiResponse handle(Engine& engine, std::string_view method, std::string_view path,
                   std::string_view body) {
  try {
    return route(engine, method, path, body);
  } catch (const FieldError& e) {
    return error_response(http_status_for(e.code()), error_code_name(e.code()), e.what(), &e.field());
  } catch (const Error& e) {
    return error_response(http_status_for(e.code()), error_code_name(e.code()), e.what());
  } catch (const std::exception& e) {
    return error_response(500, "Internal", e.what());
  }
}

struct HttpService::Impl {
  Engine& engine;
  httplib::Server server;

  explicit Impl(Engine& e) : engine(e) {
    auto forward = [this](const httplib::Request& req, httplib::Response& res) {
      const ApiResponse out = handle(engine, req.method, req.path, req.body);
      res.status = out.status;
      res.set_content(out.body, "application/json");
    };
    server.Get(".*", forward);
    server.Post(".*", forward);
    server.Put(".*", forward);
  }
};

HttpService::HttpService(Engine& engine) : impl_(std::make_unique<Impl>(engine)) {}
HttpService::~HttpService() = default;

int HttpService::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::Io, "cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port))
    throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpService::listen() { impl_->server.listen_after_bind(); }
void HttpService::stop() { impl_->server.stop(); }

}  // namespace pingmatch
