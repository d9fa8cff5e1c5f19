#include "pingmatch/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pingmatch/error.hpp"

namespace pingmatch {

using nlohmann::json;

namespace {

// Reads keys out of one JSON object, remembering which were consumed so the
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw FieldError(ErrorCode::ConfigInvalid, name(""), "must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw FieldError(ErrorCode::ConfigInvalid, name(key), "has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string name(const std::string& key) const {
    if (prefix_.empty()) return key.empty() ? "<root>" : key;
    return key.empty() ? prefix_ : prefix_ + "." + key;
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw FieldError(ErrorCode::ConfigInvalid, name(key), "unknown key");
  }

 private:
  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

GroundTruthMode parse_mode(const std::string& text) {
  if (text == "archetype") return GroundTruthMode::Archetype;
  if (text == "profile_null") return GroundTruthMode::ProfileNull;
  throw FieldError(ErrorCode::ConfigInvalid, "sim.ground_truth",
                   "must be 'archetype' or 'profile_null'");
}

std::string_view mode_name(GroundTruthMode mode) {
  return mode == GroundTruthMode::Archetype ? "archetype" : "profile_null";
}

void read_sim(const json& j, SimConfig& sim) {
  Section s(j, "sim");
  s.read("population_size", sim.population_size);
  s.read("requests_per_hour", sim.requests_per_hour);
  s.read("max_requests", sim.max_requests);
  s.read("max_pings", sim.max_pings);
  s.read("duration_hours", sim.duration_hours);
  if (const json* pairs = s.child("language_pairs")) {
    if (!pairs->is_array())
      throw FieldError(ErrorCode::ConfigInvalid, "sim.language_pairs", "must be an array");
    sim.language_pairs.clear();
    for (std::size_t i = 0; i < pairs->size(); ++i) {
      Section p((*pairs)[i], "sim.language_pairs[" + std::to_string(i) + "]");
      LanguagePair pair;
      p.read("source", pair.source);
      p.read("target", pair.target);
      p.read("weight", pair.weight);
      p.finish();
      sim.language_pairs.push_back(pair);
    }
  }
  s.read("second_pair_probability", sim.second_pair_probability);
  s.read("timezone_offsets_minutes", sim.timezone_offsets_minutes);
  s.read("experience_marginals", sim.experience_marginals);
  s.read("documents_probability", sim.documents_probability);
  s.read("available_probability", sim.available_probability);
  s.read("multi_skill_probability", sim.multi_skill_probability);
  s.read("preference_probability", sim.preference_probability);
  std::string mode(mode_name(sim.ground_truth));
  s.read("ground_truth", mode);
  sim.ground_truth = parse_mode(mode);
  s.read("archetype_weights", sim.archetype_weights);
  s.read("latent_sd", sim.latent_sd);
  s.read("interaction_weight", sim.interaction_weight);
  s.read("active_hours", sim.active_hours);
  s.read("inactive_multiplier", sim.inactive_multiplier);
  s.read("explicit_no_probability", sim.explicit_no_probability);
  s.read("latency_median_ms", sim.latency_median_ms);
  s.read("latency_sigma", sim.latency_sigma);
  s.read("target_positive_rate", sim.target_positive_rate);
  s.read("start_time_ms", sim.start_time_ms);
  s.finish();
}

json sim_to_json(const SimConfig& sim) {
  json pairs = json::array();
  for (const auto& p : sim.language_pairs)
    pairs.push_back({{"source", p.source}, {"target", p.target}, {"weight", p.weight}});
  return {{"population_size", sim.population_size},
          {"requests_per_hour", sim.requests_per_hour},
          {"max_requests", sim.max_requests},
          {"max_pings", sim.max_pings},
          {"duration_hours", sim.duration_hours},
          {"language_pairs", std::move(pairs)},
          {"second_pair_probability", sim.second_pair_probability},
          {"timezone_offsets_minutes", sim.timezone_offsets_minutes},
          {"experience_marginals", sim.experience_marginals},
          {"documents_probability", sim.documents_probability},
          {"available_probability", sim.available_probability},
          {"multi_skill_probability", sim.multi_skill_probability},
          {"preference_probability", sim.preference_probability},
          {"ground_truth", mode_name(sim.ground_truth)},
          {"archetype_weights", sim.archetype_weights},
          {"latent_sd", sim.latent_sd},
          {"interaction_weight", sim.interaction_weight},
          {"active_hours", sim.active_hours},
          {"inactive_multiplier", sim.inactive_multiplier},
          {"explicit_no_probability", sim.explicit_no_probability},
          {"latency_median_ms", sim.latency_median_ms},
          {"latency_sigma", sim.latency_sigma},
          {"target_positive_rate", sim.target_positive_rate},
          {"start_time_ms", sim.start_time_ms}};
}

// Re-throws a section validator's failure as a field-scoped config error.
// Validator messages lead with the field name; known keys get a full path.
template <typename F>
void check_section(const char* section, const json& keys, F&& fn) {
  try {
    fn();
  } catch (const FieldError&) {
    throw;
  } catch (const Error& e) {
    std::string message = e.what();
    if (auto colon = message.find(": "); colon != std::string::npos) message = message.substr(colon + 2);
    const std::string first = message.substr(0, message.find(' '));
    const std::string where = keys.contains(first) ? std::string(section) + "." + first : section;
    throw FieldError(ErrorCode::ConfigInvalid, where, message);
  }
}

}  // namespace

void EngineConfig::propagate() {
  sim.seed = seed;
  sim.timeout_ms = timeout_ms;
  policy.seed = seed;
  train.seed = seed;
}

void EngineConfig::validate() const {
  if (timeout_ms < 0) throw FieldError(ErrorCode::ConfigInvalid, "timeout_ms", "must be >= 0");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw FieldError(ErrorCode::ConfigInvalid, "train.train_fraction", "must be in (0, 1)");
  if (port < 0 || port > 65535) throw FieldError(ErrorCode::ConfigInvalid, "serve.port", "must be in 0..65535");
  const json keys = json::parse(config_to_json(*this));
  check_section("policy", keys["policy"], [&] { policy.validate(); });
  check_section("train", keys["train"], [&] { train.validate(); });
  check_section("sim", keys["sim"], [&] { sim.validate(); });
}

EngineConfig config_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::ConfigInvalid, "config is not valid JSON");

  EngineConfig c;
  Section root(j, "");
  if (const json* paths = root.child("paths")) {
    Section s(*paths, "paths");
    std::string log = c.paths.log.string(), model = c.paths.model.string(),
                report = c.paths.report_dir.string();
    s.read("log", log);
    s.read("model", model);
    s.read("report_dir", report);
    s.finish();
    c.paths = {log, model, report};
  }
  root.read("seed", c.seed);
  root.read("timeout_ms", c.timeout_ms);
  if (const json* policy = root.child("policy")) {
    Section s(*policy, "policy");
    s.read("top_n", c.policy.top_n);
    s.read("epsilon", c.policy.epsilon);
    s.read("quiet_start_hour", c.policy.quiet_start_hour);
    s.read("quiet_end_hour", c.policy.quiet_end_hour);
    s.finish();
  }
  if (const json* train = root.child("train")) {
    Section s(*train, "train");
    s.read("lambda_grid", c.train.lambda_grid);
    s.read("cv_folds", c.train.cv_folds);
    s.read("max_iterations", c.train.max_iterations);
    s.read("convergence_tolerance", c.train.convergence_tolerance);
    s.read("train_fraction", c.train_fraction);
    s.read("segment_min_samples", c.segment_min_samples);
    s.finish();
  }
  if (const json* sim = root.child("sim")) read_sim(*sim, c.sim);
  if (const json* serve = root.child("serve")) {
    Section s(*serve, "serve");
    s.read("host", c.host);
    s.read("port", c.port);
    s.finish();
  }
  root.finish();
  c.propagate();
  c.validate();
  return c;
}

std::string config_to_json(const EngineConfig& c) {
  json j = {{"paths",
             {{"log", c.paths.log.string()},
              {"model", c.paths.model.string()},
              {"report_dir", c.paths.report_dir.string()}}},
            {"seed", c.seed},
            {"timeout_ms", c.timeout_ms},
            {"policy",
             {{"top_n", c.policy.top_n},
              {"epsilon", c.policy.epsilon},
              {"quiet_start_hour", c.policy.quiet_start_hour},
              {"quiet_end_hour", c.policy.quiet_end_hour}}},
            {"train",
             {{"lambda_grid", c.train.lambda_grid},
              {"cv_folds", c.train.cv_folds},
              {"max_iterations", c.train.max_iterations},
              {"convergence_tolerance", c.train.convergence_tolerance},
              {"train_fraction", c.train_fraction},
              {"segment_min_samples", c.segment_min_samples}}},
            {"sim", sim_to_json(c.sim)},
            {"serve", {{"host", c.host}, {"port", c.port}}}};
  return j.dump(2) + "\n";
}

EngineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

}  // namespace pingmatch
