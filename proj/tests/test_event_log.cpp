#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <unistd.h>

#include "pingmatch/dispatch.hpp"
#include "pingmatch/error.hpp"
#include "pingmatch/event_log.hpp"
#include "support.hpp"

using namespace pingmatch;
using namespace pingmatch::testing;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::Io;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() /
         ("pingmatch_" + std::to_string(::getpid()) + "_" + name);
}

// Three translators answer Yes, No, and nothing to one request.
EventLog yes_no_null_log() {
  EventLog log = log_with_translators(
      {make_translator("t1"), make_translator("t2"), make_translator("t3")});
  Dispatcher d(log);
  d.open_request(make_request("r1", 1000), candidates({"t1", "t2", "t3"}), 1000);
  d.handle_response("r1-p2", Answer::No, 2000);
  d.handle_response("r1-p1", Answer::Yes, 3000);
  d.resolve("r1", 3000);
  return log;
}

}  // namespace

TEST(EventLog, FirstAppendIsSequenceZero) {
  EventLog log;
  EXPECT_EQ(log.append(RequestRecord{make_request("r1", 5), 125}), 0u);
  EXPECT_EQ(log.size(), 1u);
}

TEST(EventLog, DanglingReferences) {
  EventLog log = log_with_translators({make_translator("t1")});
  EXPECT_EQ(code_of([&] { log.append(PingRecord{"p1", "nope", "t1", 0, false, 1}); }),
            ErrorCode::DanglingReference);
  log.append(RequestRecord{make_request("r1", 0), 100});
  EXPECT_EQ(code_of([&] { log.append(PingRecord{"p1", "r1", "ghost", 0, false, 1}); }),
            ErrorCode::DanglingReference);
  EXPECT_EQ(code_of([&] { log.append(ResponseRecord{"ghost", Answer::Yes, 10, false}); }),
            ErrorCode::DanglingReference);
}

TEST(EventLog, EqualTimestampsKeepAppendOrder) {
  EventLog log;
  const auto a = log.append(RequestRecord{make_request("ra", 10), 20});
  const auto b = log.append(RequestRecord{make_request("rb", 10), 20});
  EXPECT_LT(a, b);
  EXPECT_EQ(std::get<RequestRecord>(log.records()[0]).request.request_id, "ra");
  EXPECT_EQ(std::get<RequestRecord>(log.records()[1]).request.request_id, "rb");
}

TEST(EventLog, RejectsDecreasingTimestamps) {
  EventLog log;
  log.append(RequestRecord{make_request("r1", 10), 20});
  EXPECT_EQ(code_of([&] { log.append(RequestRecord{make_request("r2", 9), 20}); }),
            ErrorCode::OutOfOrderTimestamp);
}

TEST(EventLog, RejectsDuplicatesAndBadRecords) {
  EventLog log = log_with_translators({make_translator("t1")});
  EXPECT_EQ(code_of([&] { log.append(TranslatorRecord{0, make_translator("t1")}); }),
            ErrorCode::InvariantViolation);
  EXPECT_EQ(code_of([&] { log.append(RequestRecord{make_request("r1", 0, "en", "en"), 10}); }),
            ErrorCode::InvariantViolation);
  EXPECT_EQ(code_of([&] { log.append(RequestRecord{make_request("r1", 10), 5}); }),
            ErrorCode::InvariantViolation);
  log.append(RequestRecord{make_request("r1", 0), 100});
  log.append(PingRecord{"p1", "r1", "t1", 0, false, 1});
  // ping_index must grow per translator
  log.append(RequestRecord{make_request("r2", 0), 100});
  EXPECT_EQ(code_of([&] { log.append(PingRecord{"p2", "r2", "t1", 0, false, 1}); }),
            ErrorCode::InvariantViolation);
  EXPECT_EQ(log.next_ping_index("t1"), 2);
}

TEST(EventLog, ResolutionLabelsMustCoverThePings) {
  EventLog log = log_with_translators({make_translator("t1"), make_translator("t2")});
  log.append(RequestRecord{make_request("r1", 0), 100});
  log.append(PingRecord{"p1", "r1", "t1", 0, false, 1});
  log.append(PingRecord{"p2", "r1", "t2", 0, false, 1});

  ResolutionRecord missing{"r1", 100, RequestState::Expired, {}, {}, {{"p1", Response::Null, {}}}};
  EXPECT_EQ(code_of([&] { log.append(missing); }), ErrorCode::InvariantViolation);

  ResolutionRecord null_with_time{"r1", 100, RequestState::Expired, {}, {},
                                  {{"p1", Response::Null, 50}, {"p2", Response::Null, {}}}};
  EXPECT_EQ(code_of([&] { log.append(null_with_time); }), ErrorCode::InvariantViolation);

  ResolutionRecord matched_without_yes{"r1", 100, RequestState::Matched, "t1", 50,
                                       {{"p1", Response::No, 50}, {"p2", Response::Null, {}}}};
  EXPECT_EQ(code_of([&] { log.append(matched_without_yes); }), ErrorCode::InvariantViolation);

  ResolutionRecord ok{"r1", 100, RequestState::Expired, {}, {},
                      {{"p1", Response::No, 50}, {"p2", Response::Null, {}}}};
  EXPECT_NO_THROW(log.append(ok));
  EXPECT_EQ(code_of([&] { log.append(PingRecord{"p3", "r1", "t1", 100, false, 2}); }),
            ErrorCode::InvariantViolation);
}

TEST(EventLogFile, SaveLoadIsByteIdentical) {
  const EventLog log = yes_no_null_log();
  const auto path = temp_path("roundtrip.jsonl");
  save_log(log, path);
  std::ifstream first(path, std::ios::binary);
  const std::string original((std::istreambuf_iterator<char>(first)), {});

  const EventLog loaded = load_log(path);
  EXPECT_EQ(loaded.records(), log.records());
  const auto again = temp_path("roundtrip2.jsonl");
  save_log(loaded, again);
  std::ifstream second(again, std::ios::binary);
  EXPECT_EQ(std::string((std::istreambuf_iterator<char>(second)), {}), original);
  std::filesystem::remove(path);
  std::filesystem::remove(again);
}

TEST(EventLogFile, DescendingTimestampsAreAnInvariantViolation) {
  std::stringstream in;
  in << to_json_line(RequestRecord{make_request("r1", 50), 60}) << "\n"
     << to_json_line(RequestRecord{make_request("r2", 40), 60}) << "\n";
  try {
    read_log(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvariantViolation);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(EventLogFile, ParseErrorsNameTheLine) {
  std::stringstream in;
  in << to_json_line(RequestRecord{make_request("r1", 50), 60}) << "\n{not json\n";
  try {
    read_log(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::stringstream extra(R"({"kind":"response","at":1,"ping_id":"p","answer":"yes","late":false,"x":1})");
  EXPECT_EQ(code_of([&] { read_log(extra); }), ErrorCode::ParseError);
}

TEST(EventLogFile, EmptyFileIsEmptyLog) {
  const auto path = temp_path("empty.jsonl");
  { std::ofstream(path).flush(); }
  EXPECT_TRUE(load_log(path).empty());
  std::filesystem::remove(path);
  EXPECT_EQ(code_of([&] { load_log(path); }), ErrorCode::Io);
}

TEST(EventLogFile, EveryKindRoundTripsThroughJson) {
  TranslatorProfile t = make_translator("t1", {"fa", "en"}, 210);
  t.gender_identity = GenderIdentity::NonBinary;
  t.occupations = {"legal"};
  t.experience_level = 2;
  TranslationRequest q = make_request("r1", 5, "fa", "en");
  q.preferences.occupation = "legal";
  const std::vector<Record> records = {
      TranslatorRecord{0, t},
      RequestRecord{q, 125},
      PingRecord{"r1-p1", "r1", "t1", 5, true, 1},
      ResponseRecord{"r1-p1", Answer::Yes, 30, false},
      ResolutionRecord{"r1", 30, RequestState::Matched, "t1", 30, {{"r1-p1", Response::Yes, 30}}},
  };
  for (const auto& r : records) EXPECT_EQ(parse_json_line(to_json_line(r)), r);
}

TEST(LabeledDataset, YesNoNullMapToOneZeroZero) {
  const auto rows = labeled_dataset(yes_no_null_log());
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].label, 1);
  EXPECT_EQ(rows[1].label, 0);
  EXPECT_EQ(rows[2].label, 0);
  EXPECT_EQ(rows[2].response, Response::Null);
  EXPECT_EQ(rows[0].segment, "ar-en");
}

TEST(LabeledDataset, EmptyAndUnresolved) {
  EXPECT_TRUE(labeled_dataset(EventLog{}).empty());
  EventLog log = log_with_translators({make_translator("t1")});
  Dispatcher d(log);
  d.open_request(make_request("r1", 0), candidates({"t1"}), 0);
  EXPECT_TRUE(labeled_dataset(log).empty());  // never resolved
}

TEST(LabeledDataset, PositiveFractionMatchesDirectCount) {
  std::vector<TranslatorProfile> pool;
  for (int i = 0; i < 10; ++i) pool.push_back(make_translator("t" + std::to_string(i)));
  EventLog log = log_with_translators(pool);
  Dispatcher d(log);
  std::mt19937_64 rng(5);
  std::bernoulli_distribution yes(0.3);
  TimestampMs now = 0;
  int yes_count = 0;
  for (int r = 0; r < 5; ++r) {
    const std::string id = "r" + std::to_string(r);
    std::vector<std::string> ids;
    for (const auto& t : pool) ids.push_back(t.translator_id);
    d.open_request(make_request(id, now), candidates(ids), now);
    for (std::size_t slot = 0; slot < ids.size(); ++slot) {
      if (yes(rng)) {
        d.handle_response(ping_id_for(id, slot), Answer::Yes, now + 10);
      }
    }
    now += kDefaultTimeoutMs;
    d.resolve(id, now);
    ++now;
  }
  for (const auto& record : log.records())
    if (const auto* res = std::get_if<ResolutionRecord>(&record))
      for (const auto& l : res->labels) yes_count += l.response == Response::Yes;

  const auto rows = labeled_dataset(log);
  ASSERT_EQ(rows.size(), 50u);
  int positives = 0;
  for (const auto& r : rows) positives += r.label;
  EXPECT_EQ(positives, yes_count);
}

TEST(LabeledDataset, HistoryCountsOnlyResolvedOutcomes) {
  EventLog log = log_with_translators({make_translator("t1")});
  Dispatcher d(log);
  d.open_request(make_request("r1", 0), candidates({"t1"}), 0);
  d.handle_response("r1-p1", Answer::Yes, 10);
  // r2 is sent before r1 resolves, so it must not see r1's yes.
  d.open_request(make_request("r2", 20), candidates({"t1"}), 20);
  d.resolve("r1", 30);
  d.open_request(make_request("r3", 40), candidates({"t1"}), 40);
  d.resolve_due(1'000'000);

  const auto rows = labeled_dataset(log);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].prior_stats, ResponseStats{});
  EXPECT_EQ(rows[1].prior_stats, ResponseStats{});
  EXPECT_EQ(rows[2].prior_stats.overall, (RateCounter{1, 1}));
  EXPECT_DOUBLE_EQ(rows[2].features()[kOverallRate], 2.0 / 3.0);

  const StatsBook book = stats_at(log, log.size());
  EXPECT_EQ(book.get("t1").overall, (RateCounter{1, 3}));
}

TEST(ResolvedPings, JoinsFinalOutcomes) {
  const auto events = resolved_pings(yes_no_null_log());
  ASSERT_EQ(events.size(), 3u);
  EXPECT_EQ(events[0].response, Response::Yes);
  EXPECT_EQ(events[0].responded_at, 3000);
  EXPECT_EQ(events[1].response, Response::No);
  EXPECT_EQ(events[2].response, Response::Null);
  EXPECT_FALSE(events[2].responded_at.has_value());
}
