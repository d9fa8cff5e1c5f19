#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "pingmatch/features.hpp"
#include "pingmatch/types.hpp"

namespace pingmatch {

using SequenceNumber = std::uint64_t;

// Append-only, timestamp-ordered log of translators, requests, pings,
// responses, and resolutions. Single writer; readers copy or hold const refs.
class EventLog {
 public:
  // Validates the record against everything already in the log.
  // Throws OutOfOrderTimestamp, DanglingReference, or InvariantViolation.
  SequenceNumber append(Record record);

  const std::vector<Record>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  std::optional<TimestampMs> last_timestamp() const;

  const TranslatorProfile* translator(const TranslatorId& id) const;
  const TranslationRequest* request(const RequestId& id) const;
  const RequestRecord* request_record(const RequestId& id) const;
  const PingRecord* ping(const PingId& id) const;
  const ResolutionRecord* resolution(const RequestId& id) const;
  const std::vector<PingId>& pings_of(const RequestId& id) const;

  // ping_index the next ping to this translator must carry (1-based).
  std::int64_t next_ping_index(const TranslatorId& id) const;

  std::vector<TranslatorProfile> translators() const;

 private:
  struct RequestEntry {
    std::size_t record;
    std::vector<PingId> pings;
    std::optional<std::size_t> resolution;
  };

  void check(const Record& record) const;

  std::vector<Record> records_;
  std::unordered_map<TranslatorId, std::size_t> translators_;
  std::unordered_map<RequestId, RequestEntry> requests_;
  std::unordered_map<PingId, std::size_t> pings_;
  std::unordered_map<TranslatorId, std::int64_t> last_ping_index_;
};

// One JSON object per line; see docs/formats.md.
std::string to_json_line(const Record& record);
Record parse_json_line(const std::string& line);

EventLog read_log(std::istream& in);
void write_log(const EventLog& log, std::ostream& out);

// Throws Io, ParseError (with line number) or InvariantViolation.
EventLog load_log(const std::filesystem::path& path);
void save_log(const EventLog& log, const std::filesystem::path& path);

// Folds a resolution into per-translator stats using each ping's local hour.
void apply_resolution(StatsBook& book, const EventLog& log, const ResolutionRecord& resolution);

// Stats as of just after the given sequence number (exclusive bound).
StatsBook stats_at(const EventLog& log, SequenceNumber end);

// One row per resolved ping, in log (sent_at) order.
struct LabeledRow {
  PingId ping_id;
  RequestId request_id;
  TranslatorProfile translator;
  ResponseStats prior_stats;  // history strictly before this ping
  int hour = 0;               // translator-local hour of sent_at
  SequenceNumber position = 0;
  TimestampMs timestamp = 0;
  std::string segment;  // language pair, e.g. "ar-en"
  Response response = Response::Null;
  int label = 0;

  FeatureVector features() const { return feature_vector(translator, prior_stats, hour); }
};

// Pings whose request never resolved carry no final label and are omitted.
std::vector<LabeledRow> labeled_dataset(const EventLog& log);

// Joins each ping with its final outcome from the resolution record.
std::vector<PingEvent> resolved_pings(const EventLog& log);

}  // namespace pingmatch
