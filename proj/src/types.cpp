#include "pingmatch/types.hpp"

#include "pingmatch/error.hpp"

namespace pingmatch {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::OutOfOrderTimestamp: return "OutOfOrderTimestamp";
    case ErrorCode::DanglingReference: return "DanglingReference";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::SingleClassData: return "SingleClassData";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::FoldTooSmall: return "FoldTooSmall";
    case ErrorCode::SingleClassFold: return "SingleClassFold";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::FeatureOrderMismatch: return "FeatureOrderMismatch";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::ModelMissing: return "ModelMissing";
    case ErrorCode::DuplicateRequest: return "DuplicateRequest";
    case ErrorCode::UnknownPing: return "UnknownPing";
    case ErrorCode::UnknownRequest: return "UnknownRequest";
    case ErrorCode::AlreadyResolved: return "AlreadyResolved";
    case ErrorCode::NotDue: return "NotDue";
    case ErrorCode::NoData: return "NoData";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

std::string_view to_string(GenderIdentity g) {
  switch (g) {
    case GenderIdentity::Female: return "female";
    case GenderIdentity::Male: return "male";
    case GenderIdentity::NonBinary: return "nonbinary";
    case GenderIdentity::Other: return "other";
  }
  return "other";
}

std::optional<GenderIdentity> parse_gender(std::string_view s) {
  if (s == "female") return GenderIdentity::Female;
  if (s == "male") return GenderIdentity::Male;
  if (s == "nonbinary") return GenderIdentity::NonBinary;
  if (s == "other") return GenderIdentity::Other;
  return std::nullopt;
}

std::string_view to_string(Response r) {
  switch (r) {
    case Response::Yes: return "yes";
    case Response::No: return "no";
    case Response::Null: return "null";
  }
  return "null";
}

std::optional<Response> parse_response(std::string_view s) {
  if (s == "yes") return Response::Yes;
  if (s == "no") return Response::No;
  if (s == "null") return Response::Null;
  return std::nullopt;
}

std::string_view to_string(RequestState s) {
  switch (s) {
    case RequestState::Open: return "open";
    case RequestState::Matched: return "matched";
    case RequestState::Expired: return "expired";
  }
  return "open";
}

void validate(const TranslatorProfile& profile) {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::InvariantViolation,
                "translator '" + profile.translator_id + "': " + what);
  };
  if (profile.translator_id.empty()) fail("translator_id is empty");
  if (profile.languages.empty()) fail("languages is empty");
  if (profile.experience_level < 0 || profile.experience_level > 2)
    fail("experience_level must be 0, 1 or 2");
  if (profile.timezone_offset_minutes < -720 || profile.timezone_offset_minutes > 840)
    fail("timezone_offset_minutes outside [-720, 840]");
}

void validate(const TranslationRequest& request) {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::InvariantViolation, "request '" + request.request_id + "': " + what);
  };
  if (request.request_id.empty()) fail("request_id is empty");
  if (request.source_language.empty()) fail("source_language is empty");
  if (request.target_language.empty()) fail("target_language is empty");
  if (request.source_language == request.target_language)
    fail("source_language equals target_language");
}

TimestampMs timestamp_of(const Record& record) {
  struct Visitor {
    TimestampMs operator()(const TranslatorRecord& r) const { return r.registered_at; }
    TimestampMs operator()(const RequestRecord& r) const { return r.request.created_at; }
    TimestampMs operator()(const PingRecord& r) const { return r.sent_at; }
    TimestampMs operator()(const ResponseRecord& r) const { return r.responded_at; }
    TimestampMs operator()(const ResolutionRecord& r) const { return r.resolved_at; }
  };
  return std::visit(Visitor{}, record);
}

std::string_view kind_of(const Record& record) {
  struct Visitor {
    std::string_view operator()(const TranslatorRecord&) const { return "translator"; }
    std::string_view operator()(const RequestRecord&) const { return "request"; }
    std::string_view operator()(const PingRecord&) const { return "ping"; }
    std::string_view operator()(const ResponseRecord&) const { return "response"; }
    std::string_view operator()(const ResolutionRecord&) const { return "resolution"; }
  };
  return std::visit(Visitor{}, record);
}

}  // namespace pingmatch
