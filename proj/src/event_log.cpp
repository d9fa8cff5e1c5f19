#include "pingmatch/event_log.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pingmatch/error.hpp"

namespace pingmatch {

using nlohmann::json;

namespace {

[[noreturn]] void violation(const std::string& message) {
  throw Error(ErrorCode::InvariantViolation, message);
}

[[noreturn]] void dangling(const std::string& message) {
  throw Error(ErrorCode::DanglingReference, message);
}

// --- encoding -------------------------------------------------------------

json encode(const TranslatorRecord& r) {
  const auto& p = r.profile;
  json j = {{"kind", "translator"},
            {"at", r.registered_at},
            {"translator_id", p.translator_id},
            {"languages", p.languages},
            {"timezone_offset_minutes", p.timezone_offset_minutes},
            {"experience_level", p.experience_level},
            {"can_translate_documents", p.can_translate_documents},
            {"declared_available", p.declared_available},
            {"multi_skill", p.multi_skill},
            {"occupations", p.occupations}};
  if (p.gender_identity) j["gender_identity"] = to_string(*p.gender_identity);
  return j;
}

json encode(const RequestRecord& r) {
  const auto& q = r.request;
  json j = {{"kind", "request"},
            {"at", q.created_at},
            {"deadline", r.deadline},
            {"request_id", q.request_id},
            {"requester_id", q.requester_id},
            {"source_language", q.source_language},
            {"target_language", q.target_language}};
  if (!q.preferences.empty()) {
    json prefs = json::object();
    if (q.preferences.gender_identity)
      prefs["gender_identity"] = to_string(*q.preferences.gender_identity);
    if (q.preferences.occupation) prefs["occupation"] = *q.preferences.occupation;
    j["preferences"] = prefs;
  }
  return j;
}

json encode(const PingRecord& r) {
  return {{"kind", "ping"},
          {"at", r.sent_at},
          {"ping_id", r.ping_id},
          {"request_id", r.request_id},
          {"translator_id", r.translator_id},
          {"ping_index", r.ping_index},
          {"exploration", r.exploration}};
}

json encode(const ResponseRecord& r) {
  return {{"kind", "response"},
          {"at", r.responded_at},
          {"ping_id", r.ping_id},
          {"answer", r.answer == Answer::Yes ? "yes" : "no"},
          {"late", r.late}};
}

json encode(const ResolutionRecord& r) {
  json labels = json::array();
  for (const auto& l : r.labels) {
    json lj = {{"ping_id", l.ping_id}, {"response", to_string(l.response)}};
    if (l.responded_at) lj["responded_at"] = *l.responded_at;
    labels.push_back(std::move(lj));
  }
  json j = {{"kind", "resolution"},
            {"at", r.resolved_at},
            {"request_id", r.request_id},
            {"state", to_string(r.state)},
            {"labels", std::move(labels)}};
  if (r.matched_translator_id) j["matched_translator_id"] = *r.matched_translator_id;
  if (r.matched_at) j["matched_at"] = *r.matched_at;
  return j;
}

// --- decoding -------------------------------------------------------------

void require_keys(const json& j, std::initializer_list<const char*> required,
                  std::initializer_list<const char*> optional = {}) {
  for (const char* key : required)
    if (!j.contains(key)) throw std::invalid_argument(std::string("missing field '") + key + "'");
  for (const auto& [key, _] : j.items()) {
    bool known = std::any_of(required.begin(), required.end(),
                             [&](const char* k) { return key == k; }) ||
                 std::any_of(optional.begin(), optional.end(),
                             [&](const char* k) { return key == k; });
    if (!known) throw std::invalid_argument("unknown field '" + key + "'");
  }
}

GenderIdentity decode_gender(const json& j) {
  auto g = parse_gender(j.get<std::string>());
  if (!g) throw std::invalid_argument("unknown gender_identity '" + j.get<std::string>() + "'");
  return *g;
}

Record decode(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("record is not a JSON object");
  if (!j.contains("kind")) throw std::invalid_argument("missing field 'kind'");
  const auto kind = j.at("kind").get<std::string>();

  if (kind == "translator") {
    require_keys(j,
                 {"kind", "at", "translator_id", "languages", "timezone_offset_minutes",
                  "experience_level", "can_translate_documents", "declared_available",
                  "multi_skill", "occupations"},
                 {"gender_identity"});
    TranslatorRecord r;
    r.registered_at = j.at("at").get<TimestampMs>();
    auto& p = r.profile;
    p.translator_id = j.at("translator_id").get<std::string>();
    p.languages = j.at("languages").get<std::set<std::string>>();
    p.timezone_offset_minutes = j.at("timezone_offset_minutes").get<int>();
    p.experience_level = j.at("experience_level").get<int>();
    p.can_translate_documents = j.at("can_translate_documents").get<bool>();
    p.declared_available = j.at("declared_available").get<bool>();
    p.multi_skill = j.at("multi_skill").get<bool>();
    p.occupations = j.at("occupations").get<std::set<std::string>>();
    if (j.contains("gender_identity")) p.gender_identity = decode_gender(j.at("gender_identity"));
    return r;
  }
  if (kind == "request") {
    require_keys(j,
                 {"kind", "at", "deadline", "request_id", "requester_id", "source_language",
                  "target_language"},
                 {"preferences"});
    RequestRecord r;
    auto& q = r.request;
    q.created_at = j.at("at").get<TimestampMs>();
    r.deadline = j.at("deadline").get<TimestampMs>();
    q.request_id = j.at("request_id").get<std::string>();
    q.requester_id = j.at("requester_id").get<std::string>();
    q.source_language = j.at("source_language").get<std::string>();
    q.target_language = j.at("target_language").get<std::string>();
    if (j.contains("preferences")) {
      const auto& prefs = j.at("preferences");
      require_keys(prefs, {}, {"gender_identity", "occupation"});
      if (prefs.contains("gender_identity"))
        q.preferences.gender_identity = decode_gender(prefs.at("gender_identity"));
      if (prefs.contains("occupation"))
        q.preferences.occupation = prefs.at("occupation").get<std::string>();
    }
    return r;
  }
  if (kind == "ping") {
    require_keys(j, {"kind", "at", "ping_id", "request_id", "translator_id", "ping_index",
                     "exploration"});
    PingRecord r;
    r.sent_at = j.at("at").get<TimestampMs>();
    r.ping_id = j.at("ping_id").get<std::string>();
    r.request_id = j.at("request_id").get<std::string>();
    r.translator_id = j.at("translator_id").get<std::string>();
    r.ping_index = j.at("ping_index").get<std::int64_t>();
    r.exploration = j.at("exploration").get<bool>();
    return r;
  }
  if (kind == "response") {
    require_keys(j, {"kind", "at", "ping_id", "answer", "late"});
    ResponseRecord r;
    r.responded_at = j.at("at").get<TimestampMs>();
    r.ping_id = j.at("ping_id").get<std::string>();
    const auto answer = j.at("answer").get<std::string>();
    if (answer == "yes") {
      r.answer = Answer::Yes;
    } else if (answer == "no") {
      r.answer = Answer::No;
    } else {
      throw std::invalid_argument("answer must be 'yes' or 'no'");
    }
    r.late = j.at("late").get<bool>();
    return r;
  }
  if (kind == "resolution") {
    require_keys(j, {"kind", "at", "request_id", "state", "labels"},
                 {"matched_translator_id", "matched_at"});
    ResolutionRecord r;
    r.resolved_at = j.at("at").get<TimestampMs>();
    r.request_id = j.at("request_id").get<std::string>();
    const auto state = j.at("state").get<std::string>();
    if (state == "matched") {
      r.state = RequestState::Matched;
    } else if (state == "expired") {
      r.state = RequestState::Expired;
    } else {
      throw std::invalid_argument("resolution state must be 'matched' or 'expired'");
    }
    if (j.contains("matched_translator_id"))
      r.matched_translator_id = j.at("matched_translator_id").get<std::string>();
    if (j.contains("matched_at")) r.matched_at = j.at("matched_at").get<TimestampMs>();
    for (const auto& lj : j.at("labels")) {
      require_keys(lj, {"ping_id", "response"}, {"responded_at"});
      PingLabel label;
      label.ping_id = lj.at("ping_id").get<std::string>();
      auto response = parse_response(lj.at("response").get<std::string>());
      if (!response) throw std::invalid_argument("unknown label response");
      label.response = *response;
      if (lj.contains("responded_at")) label.responded_at = lj.at("responded_at").get<TimestampMs>();
      r.labels.push_back(std::move(label));
    }
    return r;
  }
  throw std::invalid_argument("unknown kind '" + kind + "'");
}

}  // namespace

// --- EventLog ---------------------------------------------------------------

std::optional<TimestampMs> EventLog::last_timestamp() const {
  if (records_.empty()) return std::nullopt;
  return timestamp_of(records_.back());
}

const TranslatorProfile* EventLog::translator(const TranslatorId& id) const {
  auto it = translators_.find(id);
  if (it == translators_.end()) return nullptr;
  return &std::get<TranslatorRecord>(records_[it->second]).profile;
}

const TranslationRequest* EventLog::request(const RequestId& id) const {
  auto it = requests_.find(id);
  if (it == requests_.end()) return nullptr;
  return &std::get<RequestRecord>(records_[it->second.record]).request;
}

const RequestRecord* EventLog::request_record(const RequestId& id) const {
  auto it = requests_.find(id);
  if (it == requests_.end()) return nullptr;
  return &std::get<RequestRecord>(records_[it->second.record]);
}

const PingRecord* EventLog::ping(const PingId& id) const {
  auto it = pings_.find(id);
  if (it == pings_.end()) return nullptr;
  return &std::get<PingRecord>(records_[it->second]);
}

const ResolutionRecord* EventLog::resolution(const RequestId& id) const {
  auto it = requests_.find(id);
  if (it == requests_.end() || !it->second.resolution) return nullptr;
  return &std::get<ResolutionRecord>(records_[*it->second.resolution]);
}

const std::vector<PingId>& EventLog::pings_of(const RequestId& id) const {
  static const std::vector<PingId> kNone;
  auto it = requests_.find(id);
  return it == requests_.end() ? kNone : it->second.pings;
}

std::int64_t EventLog::next_ping_index(const TranslatorId& id) const {
  auto it = last_ping_index_.find(id);
  return it == last_ping_index_.end() ? 1 : it->second + 1;
}

std::vector<TranslatorProfile> EventLog::translators() const {
  std::vector<TranslatorProfile> out;
  out.reserve(translators_.size());
  for (const auto& record : records_)
    if (const auto* t = std::get_if<TranslatorRecord>(&record)) out.push_back(t->profile);
  return out;
}

void EventLog::check(const Record& record) const {
  const TimestampMs at = timestamp_of(record);
  if (auto last = last_timestamp(); last && at < *last) {
    throw Error(ErrorCode::OutOfOrderTimestamp,
                std::string(kind_of(record)) + " at " + std::to_string(at) +
                    " precedes last timestamp " + std::to_string(*last));
  }

  struct Checker {
    const EventLog& log;

    void operator()(const TranslatorRecord& r) const {
      validate(r.profile);
      if (log.translators_.count(r.profile.translator_id))
        violation("duplicate translator_id '" + r.profile.translator_id + "'");
    }

    void operator()(const RequestRecord& r) const {
      validate(r.request);
      if (r.deadline < r.request.created_at)
        violation("request '" + r.request.request_id + "' deadline precedes created_at");
      if (log.requests_.count(r.request.request_id))
        violation("duplicate request_id '" + r.request.request_id + "'");
    }

    void operator()(const PingRecord& r) const {
      if (r.ping_id.empty()) violation("ping_id is empty");
      if (log.pings_.count(r.ping_id)) violation("duplicate ping_id '" + r.ping_id + "'");
      auto req = log.requests_.find(r.request_id);
      if (req == log.requests_.end())
        dangling("ping '" + r.ping_id + "' references unknown request '" + r.request_id + "'");
      if (!log.translators_.count(r.translator_id))
        dangling("ping '" + r.ping_id + "' references unknown translator '" + r.translator_id +
                 "'");
      if (req->second.resolution)
        violation("ping '" + r.ping_id + "' sent for resolved request '" + r.request_id + "'");
      if (r.ping_index < log.next_ping_index(r.translator_id))
        violation("ping '" + r.ping_id + "' ping_index " + std::to_string(r.ping_index) +
                  " is not increasing for translator '" + r.translator_id + "'");
    }

    void operator()(const ResponseRecord& r) const {
      const PingRecord* ping = log.ping(r.ping_id);
      if (!ping) dangling("response references unknown ping '" + r.ping_id + "'");
      if (r.responded_at < ping->sent_at)
        violation("response to '" + r.ping_id + "' precedes its ping");
    }

    void operator()(const ResolutionRecord& r) const {
      auto req = log.requests_.find(r.request_id);
      if (req == log.requests_.end())
        dangling("resolution references unknown request '" + r.request_id + "'");
      if (req->second.resolution) violation("request '" + r.request_id + "' resolved twice");
      const std::string who = "resolution of '" + r.request_id + "': ";
      if (r.state == RequestState::Open) violation(who + "state cannot be open");
      const bool matched = r.state == RequestState::Matched;
      if (matched != r.matched_translator_id.has_value() || matched != r.matched_at.has_value())
        violation(who + "matched state requires matched_translator_id and matched_at");

      std::set<PingId> expected(req->second.pings.begin(), req->second.pings.end());
      std::set<PingId> seen;
      bool matched_label_found = false;
      for (const auto& label : r.labels) {
        if (!expected.count(label.ping_id))
          violation(who + "label for foreign ping '" + label.ping_id + "'");
        if (!seen.insert(label.ping_id).second)
          violation(who + "ping '" + label.ping_id + "' labeled twice");
        if ((label.response == Response::Null) == label.responded_at.has_value())
          violation(who + "ping '" + label.ping_id + "' responded_at must be absent iff null");
        const PingRecord* ping = log.ping(label.ping_id);
        if (label.responded_at &&
            (*label.responded_at < ping->sent_at || *label.responded_at > r.resolved_at))
          violation(who + "ping '" + label.ping_id + "' responded_at outside [sent_at, resolved_at]");
        if (matched && label.response == Response::Yes &&
            ping->translator_id == *r.matched_translator_id &&
            label.responded_at == r.matched_at)
          matched_label_found = true;
      }
      if (seen.size() != expected.size()) violation(who + "not every ping is labeled");
      if (matched && !matched_label_found)
        violation(who + "matched translator has no matching yes label");
    }
  };
  std::visit(Checker{*this}, record);
}

SequenceNumber EventLog::append(Record record) {
  check(record);
  const std::size_t seq = records_.size();
  std::visit(
      [&](const auto& r) {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, TranslatorRecord>) {
          translators_.emplace(r.profile.translator_id, seq);
        } else if constexpr (std::is_same_v<T, RequestRecord>) {
          requests_.emplace(r.request.request_id, RequestEntry{seq, {}, std::nullopt});
        } else if constexpr (std::is_same_v<T, PingRecord>) {
          pings_.emplace(r.ping_id, seq);
          requests_.at(r.request_id).pings.push_back(r.ping_id);
          last_ping_index_[r.translator_id] = r.ping_index;
        } else if constexpr (std::is_same_v<T, ResolutionRecord>) {
          requests_.at(r.request_id).resolution = seq;
        }
      },
      record);
  records_.push_back(std::move(record));
  return seq;
}

// --- serialization ----------------------------------------------------------

std::string to_json_line(const Record& record) {
  return std::visit([](const auto& r) { return encode(r).dump(); }, record);
}

Record parse_json_line(const std::string& line) {
  try {
    return decode(json::parse(line));
  } catch (const json::exception& e) {
    throw std::invalid_argument(e.what());
  }
}

EventLog read_log(std::istream& in) {
  EventLog log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Record record;
    try {
      record = parse_json_line(line);
    } catch (const std::invalid_argument& e) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      log.append(std::move(record));
    } catch (const Error& e) {
      throw Error(ErrorCode::InvariantViolation,
                  "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return log;
}

void write_log(const EventLog& log, std::ostream& out) {
  for (const auto& record : log.records()) out << to_json_line(record) << '\n';
}

EventLog load_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open event log '" + path.string() + "'");
  return read_log(in);
}

void save_log(const EventLog& log, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write event log '" + path.string() + "'");
  write_log(log, out);
  if (!out) throw Error(ErrorCode::Io, "short write to '" + path.string() + "'");
}

// --- derived views ----------------------------------------------------------

void apply_resolution(StatsBook& book, const EventLog& log, const ResolutionRecord& resolution) {
  for (const auto& label : resolution.labels) {
    const PingRecord* ping = log.ping(label.ping_id);
    const TranslatorProfile* profile = log.translator(ping->translator_id);
    book.record(ping->translator_id, label.response == Response::Yes,
                local_hour(ping->sent_at, profile->timezone_offset_minutes));
  }
}

StatsBook stats_at(const EventLog& log, SequenceNumber end) {
  StatsBook book;
  const auto& records = log.records();
  const std::size_t stop = std::min<std::size_t>(end, records.size());
  for (std::size_t i = 0; i < stop; ++i)
    if (const auto* r = std::get_if<ResolutionRecord>(&records[i])) apply_resolution(book, log, *r);
  return book;
}

std::vector<LabeledRow> labeled_dataset(const EventLog& log) {
  std::vector<LabeledRow> rows;
  std::vector<bool> resolved;
  std::unordered_map<PingId, std::size_t> row_of;
  StatsBook book;

  const auto& records = log.records();
  for (std::size_t seq = 0; seq < records.size(); ++seq) {
    if (const auto* ping = std::get_if<PingRecord>(&records[seq])) {
      const TranslatorProfile& profile = *log.translator(ping->translator_id);
      const TranslationRequest& request = *log.request(ping->request_id);
      LabeledRow row;
      row.ping_id = ping->ping_id;
      row.request_id = ping->request_id;
      row.translator = profile;
      row.prior_stats = book.get(ping->translator_id);
      row.hour = local_hour(ping->sent_at, profile.timezone_offset_minutes);
      row.position = seq;
      row.timestamp = ping->sent_at;
      row.segment = request.language_pair();
      row_of.emplace(ping->ping_id, rows.size());
      rows.push_back(std::move(row));
      resolved.push_back(false);
    } else if (const auto* res = std::get_if<ResolutionRecord>(&records[seq])) {
      for (const auto& label : res->labels) {
        const std::size_t i = row_of.at(label.ping_id);
        rows[i].response = label.response;
        rows[i].label = label.response == Response::Yes ? 1 : 0;
        resolved[i] = true;
      }
      apply_resolution(book, log, *res);
    }
  }

  std::vector<LabeledRow> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (resolved[i]) out.push_back(std::move(rows[i]));
  return out;
}

std::vector<PingEvent> resolved_pings(const EventLog& log) {
  std::vector<PingEvent> out;
  for (const auto& record : log.records()) {
    const auto* ping = std::get_if<PingRecord>(&record);
    if (!ping) continue;
    const ResolutionRecord* res = log.resolution(ping->request_id);
    if (!res) continue;
    auto label = std::find_if(res->labels.begin(), res->labels.end(),
                              [&](const PingLabel& l) { return l.ping_id == ping->ping_id; });
    out.push_back(PingEvent{*ping, label->response, label->responded_at});
  }
  return out;
}

}  // namespace pingmatch
