#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include "pingmatch/dispatch.hpp"
#include "pingmatch/evaluation.hpp"
#include "pingmatch/event_log.hpp"
#include "pingmatch/features.hpp"
#include "pingmatch/matcher.hpp"
#include "pingmatch/model.hpp"

namespace pingmatch {

struct LanguagePair {
  LanguageCode source;
  LanguageCode target;
  double weight = 1.0;

  bool operator==(const LanguagePair&) const = default;
};

enum class GroundTruthMode {
  // Positive weights on latent responsiveness and on every profile flag.
  Archetype,
  // Profile flags carry no signal; only latent responsiveness and hours do.
  ProfileNull,
};

struct SimConfig {
  std::size_t population_size = 500;
  double requests_per_hour = 30.0;
  // Stopping rules; 0 disables a rule, at least one must be active.
  std::size_t max_requests = 2000;
  std::size_t max_pings = 0;
  double duration_hours = 0.0;

  std::vector<LanguagePair> language_pairs = {
      {"ar", "en", 0.30}, {"fa", "en", 0.18}, {"ps", "en", 0.12}, {"es", "en", 0.10},
      {"fr", "en", 0.08}, {"so", "en", 0.06}, {"uk", "en", 0.06}, {"ti", "en", 0.05},
      {"ku", "en", 0.03}, {"rw", "fr", 0.02}};
  double second_pair_probability = 0.25;
  std::vector<int> timezone_offsets_minutes = {-480, -300, 0, 60, 120, 180, 210, 270, 330};

  std::array<double, 3> experience_marginals = {0.5, 0.3, 0.2};
  double documents_probability = 0.4;
  double available_probability = 0.3;
  double multi_skill_probability = 0.3;
  double preference_probability = 0.03;

  GroundTruthMode ground_truth = GroundTruthMode::Archetype;
  // Population-level truth weights in canonical feature order. Rate slots are
  // zero by default: responsiveness enters through the latent offset.
  std::array<double, kFeatureCount> archetype_weights = {0.0, 0.0, 0.9, 1.5, 1.5, 1.5};
  double latent_sd = 2.5;
  // Misspecification: adds weight * experience_level * multi_skill to the truth.
  double interaction_weight = 0.0;
  int active_hours = 12;
  double inactive_multiplier = 0.5;
  double explicit_no_probability = 0.3;
  double latency_median_ms = 59'000.0;
  double latency_sigma = 0.9;

  // Ping-level rate of in-time yes answers.
  double target_positive_rate = 0.06;
  TimestampMs timeout_ms = kDefaultTimeoutMs;
  TimestampMs start_time_ms = 1'609'459'200'000;  // 2021-01-01T00:00:00Z
  std::uint64_t seed = 1;

  void validate() const;
};

struct GroundTruthBehavior {
  std::array<double, kFeatureCount> true_weights{};
  double intercept = 0.0;
  double responsiveness_offset = 0.0;
  double interaction_weight = 0.0;
  std::array<double, kHoursPerDay> hourly_multiplier{};
  double latency_median_ms = 59'000.0;
  double latency_sigma = 0.9;
  double explicit_no_probability = 0.3;

  double true_score(const FeatureVector& x) const;
  double yes_probability(const FeatureVector& x, int hour) const;
};

struct Population {
  std::vector<TranslatorProfile> profiles;
  std::vector<GroundTruthBehavior> behaviors;  // parallel to profiles
  double intercept = 0.0;
};

Population generate_population(const SimConfig& config, Rng& rng);

// Intercept making the population-average yes rate (uniform over translators
// and local hours) equal to target_positive_rate.
double calibrate_intercept(const Population& population, double target_rate);

struct SimulatedResponse {
  Response answer = Response::Null;
  std::optional<TimestampMs> latency_ms;  // absent for Null
};

SimulatedResponse simulate_response(const GroundTruthBehavior& behavior, const FeatureVector& x,
                                    int hour, Rng& rng);

struct EpisodeResult {
  EventLog log;
  MatchMetrics metrics;
  // Ground-truth yes probability of every ping at the moment it was sent.
  std::unordered_map<PingId, double> true_yes_probability;
  std::unordered_map<TranslatorId, std::int64_t> matches_per_translator;
};

// Discrete-event simulation over a fixed population. All randomness is drawn
// from streams derived from SimConfig::seed; the clock is logical.
class Simulation {
 public:
  Simulation(SimConfig config, MatchPolicy policy);

  const Population& population() const { return population_; }
  const EventLog& log() const { return log_; }
  const Dispatcher& dispatcher() const { return dispatcher_; }
  const StatsBook& stats() const { return stats_; }
  TimestampMs now() const { return now_; }

  // Without a model the candidates are ranked in uniform random order.
  void set_model(std::optional<ResponseModel> model) { model_ = std::move(model); }
  void set_policy(const MatchPolicy& policy);

  // Generates arrivals until a budget is exhausted (0 = unlimited), then
  // drains every outstanding response and deadline.
  void run(std::size_t request_budget, std::size_t ping_budget, double hours_budget = 0.0);

  EpisodeResult take_result() &&;

 private:
  enum class EventType { Response = 0, Deadline = 1, Arrival = 2 };
  struct Event {
    TimestampMs at;
    EventType type;
    std::uint64_t seq;
    std::string id;
    Answer answer = Answer::No;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const;
  };

  void push(TimestampMs at, EventType type, std::string id, Answer answer = Answer::No);
  void on_arrival(TimestampMs at);
  TimestampMs next_arrival_after(TimestampMs t);

  SimConfig config_;
  MatchPolicy policy_;
  Rng population_rng_;
  Rng arrival_rng_;
  Rng selection_rng_;
  Rng response_rng_;
  Population population_;
  std::unordered_map<TranslatorId, std::size_t> index_of_;
  EventLog log_;
  Dispatcher dispatcher_{log_};
  StatsBook stats_;
  std::optional<ResponseModel> model_;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::uint64_t seq_ = 0;
  std::uint64_t requests_created_ = 0;
  TimestampMs now_ = 0;
  TimestampMs next_arrival_ = 0;
  std::unordered_map<PingId, double> true_p_;
  std::unordered_map<TranslatorId, std::int64_t> matches_;
};

// Throws ConfigInvalid.
EpisodeResult run_episode(const SimConfig& config, const MatchPolicy& policy,
                          const std::optional<ResponseModel>& model);

// Chronological cut: the first `fraction` of rows train, the rest test. The
// cut advances past timestamp ties so every test row is strictly later.
std::size_t temporal_split_index(std::span<const LabeledRow> rows, double fraction);

std::vector<ScoredSample> score_rows(const ResponseModel& model, std::span<const LabeledRow> rows);

struct TrainEvalResult {
  ResponseModel model;
  LambdaSelection selection;
  MetricReport report;
  SegmentEvaluation segments;
  double profile_only_auc = 0.5;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  std::vector<ScoredSample> test_scores;
};

// Temporal 80/20 split of an existing log: select lambda and fit on the first
// 80%, report on the held-out 20%, plus a profile-features-only ablation.
TrainEvalResult train_and_evaluate(const EventLog& log, const TrainConfig& train,
                                   double train_fraction = 0.8,
                                   std::size_t segment_min_samples = 1000);

struct BootstrapResult {
  TrainEvalResult result;
  EpisodeResult episode;
};

// Runs an epsilon = 1 exploration episode (bias-free data) for
// config.max_pings pings and hands it to train_and_evaluate.
BootstrapResult bootstrap_train_eval(const SimConfig& config, const TrainConfig& train = {},
                                     const MatchPolicy& policy = {});

// Gini coefficient of non-negative counts (0 = perfectly even).
double gini(std::vector<std::int64_t> counts);

struct EpochReport {
  int epoch = 0;
  double match_rate = 0.0;
  std::optional<double> median_match_time_ms;
  double match_gini = 0.0;
  std::optional<double> model_lambda;
};

// Collect -> train -> deploy loop on one continuing population and clock.
// Epoch 0 explores (epsilon = 1); later epochs use `policy` with a model
// trained on the whole log so far.
std::vector<EpochReport> run_feedback_epochs(const SimConfig& config, const MatchPolicy& policy,
                                             const TrainConfig& train, int epochs,
                                             std::size_t requests_per_epoch);

}  // namespace pingmatch
