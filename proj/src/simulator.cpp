#include "pingmatch/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "pingmatch/error.hpp"

namespace pingmatch {

namespace {

std::string padded(char prefix, std::uint64_t n, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*llu", prefix, width, static_cast<unsigned long long>(n));
  return buf;
}

template <typename T>
std::size_t weighted_pick(const std::vector<T>& items, Rng& rng) {
  std::vector<double> weights;
  weights.reserve(items.size());
  for (const auto& item : items) weights.push_back(item.weight);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  return pick(rng);
}

// Independent streams for each concern, all derived from the one seed.
Rng derive(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    stream};
  return Rng(seq);
}

}  // namespace

void SimConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigInvalid, what); };
  if (population_size < 1) fail("population_size must be >= 1");
  if (!(requests_per_hour > 0.0)) fail("requests_per_hour must be > 0");
  if (max_requests == 0 && max_pings == 0 && !(duration_hours > 0.0))
    fail("one of max_requests, max_pings, duration_hours must be set");
  if (language_pairs.empty()) fail("language_pairs is empty");
  for (const auto& p : language_pairs) {
    if (p.source.empty() || p.target.empty() || p.source == p.target)
      fail("language pair '" + p.source + "-" + p.target + "' is invalid");
    if (!(p.weight > 0.0)) fail("language pair weights must be > 0");
  }
  if (timezone_offsets_minutes.empty()) fail("timezone_offsets_minutes is empty");
  for (int tz : timezone_offsets_minutes)
    if (tz < -720 || tz > 840) fail("timezone offset outside [-720, 840]");
  auto probability = [&](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) fail(std::string(name) + " must be in [0, 1]");
  };
  probability(second_pair_probability, "second_pair_probability");
  probability(documents_probability, "documents_probability");
  probability(available_probability, "available_probability");
  probability(multi_skill_probability, "multi_skill_probability");
  probability(preference_probability, "preference_probability");
  probability(explicit_no_probability, "explicit_no_probability");
  probability(inactive_multiplier, "inactive_multiplier");
  if (!(target_positive_rate > 0.0 && target_positive_rate < 1.0))
    fail("target_positive_rate must be in (0, 1)");
  double marginal_sum = 0.0;
  for (double m : experience_marginals) {
    if (m < 0.0) fail("experience_marginals must be >= 0");
    marginal_sum += m;
  }
  if (!(marginal_sum > 0.0)) fail("experience_marginals must not all be zero");
  if (active_hours < 0 || active_hours > kHoursPerDay) fail("active_hours must be in 0..24");
  if (!(latent_sd >= 0.0)) fail("latent_sd must be >= 0");
  if (!(latency_median_ms > 0.0) || !(latency_sigma > 0.0))
    fail("latency parameters must be > 0");
  if (timeout_ms < 0) fail("timeout_ms must be >= 0");
}

double GroundTruthBehavior::true_score(const FeatureVector& x) const {
  double z = intercept + responsiveness_offset;
  for (std::size_t i = 0; i < kFeatureCount; ++i) z += true_weights[i] * x[i];
  z += interaction_weight * x[kExperience] * x[kMultiSkill];
  return z;
}

double GroundTruthBehavior::yes_probability(const FeatureVector& x, int hour) const {
  const double p = sigmoid(true_score(x)) * hourly_multiplier[static_cast<std::size_t>(hour)];
  return std::clamp(p, 0.0, 0.999);
}

Population generate_population(const SimConfig& config, Rng& rng) {
  config.validate();
  Population pop;
  pop.profiles.reserve(config.population_size);
  pop.behaviors.reserve(config.population_size);

  std::bernoulli_distribution second_pair(config.second_pair_probability);
  std::bernoulli_distribution documents(config.documents_probability);
  std::bernoulli_distribution available(config.available_probability);
  std::bernoulli_distribution multi_skill(config.multi_skill_probability);
  std::bernoulli_distribution occupation(0.3);
  std::bernoulli_distribution has_gender(0.9);
  std::discrete_distribution<int> experience(config.experience_marginals.begin(),
                                             config.experience_marginals.end());
  std::uniform_int_distribution<std::size_t> timezone(0, config.timezone_offsets_minutes.size() - 1);
  std::uniform_int_distribution<int> gender(0, 3);
  std::uniform_int_distribution<int> phase(0, kHoursPerDay - 1);
  std::normal_distribution<double> latent(0.0, 1.0);
  std::normal_distribution<double> latency_jitter(0.0, 0.3);

  static const std::array<const char*, 5> kOccupations = {"medicine", "legal", "education",
                                                          "media", "social_services"};

  std::array<double, kFeatureCount> weights = config.archetype_weights;
  if (config.ground_truth == GroundTruthMode::ProfileNull) {
    weights[kExperience] = weights[kDocuments] = weights[kAvailable] = weights[kMultiSkill] = 0.0;
  }

  for (std::size_t i = 0; i < config.population_size; ++i) {
    TranslatorProfile t;
    t.translator_id = padded('t', i + 1, 5);
    const auto& home = config.language_pairs[weighted_pick(config.language_pairs, rng)];
    t.languages = {home.source, home.target};
    if (second_pair(rng)) {
      const auto& extra = config.language_pairs[weighted_pick(config.language_pairs, rng)];
      t.languages.insert(extra.source);
      t.languages.insert(extra.target);
    }
    t.timezone_offset_minutes = config.timezone_offsets_minutes[timezone(rng)];
    t.experience_level = experience(rng);
    t.can_translate_documents = documents(rng);
    t.declared_available = available(rng);
    t.multi_skill = multi_skill(rng);
    if (has_gender(rng)) t.gender_identity = static_cast<GenderIdentity>(gender(rng));
    for (const char* occ : kOccupations)
      if (occupation(rng)) t.occupations.insert(occ);

    GroundTruthBehavior b;
    b.true_weights = weights;
    b.responsiveness_offset = config.latent_sd * latent(rng);
    b.interaction_weight = config.interaction_weight;
    const int start = phase(rng);
    for (int h = 0; h < kHoursPerDay; ++h) {
      const int since_start = (h - start + kHoursPerDay) % kHoursPerDay;
      b.hourly_multiplier[static_cast<std::size_t>(h)] =
          since_start < config.active_hours ? 1.0 : config.inactive_multiplier;
    }
    b.latency_median_ms = config.latency_median_ms * std::exp(latency_jitter(rng));
    b.latency_sigma = config.latency_sigma;
    b.explicit_no_probability = config.explicit_no_probability;

    pop.profiles.push_back(std::move(t));
    pop.behaviors.push_back(b);
  }

  // Labels count only answers that beat the timeout, so the yes rate is
  // inflated by the share of latencies that fit inside it.
  const double in_time =
      config.timeout_ms > 0
          ? 0.5 * std::erfc(-std::log(static_cast<double>(config.timeout_ms) / config.latency_median_ms) /
                            (config.latency_sigma * std::sqrt(2.0)))
          : 0.0;
  const double yes_target = std::min(0.95, config.target_positive_rate / std::max(in_time, 1e-9));
  pop.intercept = calibrate_intercept(pop, yes_target);
  for (auto& b : pop.behaviors) b.intercept = pop.intercept;
  return pop;
}

double calibrate_intercept(const Population& pop, double target_rate) {
  auto mean_rate = [&](double intercept) {
    double total = 0.0;
    for (std::size_t i = 0; i < pop.profiles.size(); ++i) {
      GroundTruthBehavior b = pop.behaviors[i];
      b.intercept = intercept;
      const FeatureVector x = feature_vector(pop.profiles[i], ResponseStats{}, 0);
      for (int h = 0; h < kHoursPerDay; ++h) total += b.yes_probability(x, h);
    }
    return total / static_cast<double>(pop.profiles.size() * kHoursPerDay);
  };
  double lo = -30.0;
  double hi = 30.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mean_rate(mid) < target_rate ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

SimulatedResponse simulate_response(const GroundTruthBehavior& behavior, const FeatureVector& x,
                                    int hour, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SimulatedResponse out;
  if (unit(rng) < behavior.yes_probability(x, hour)) {
    out.answer = Response::Yes;
  } else if (unit(rng) < behavior.explicit_no_probability) {
    out.answer = Response::No;
  } else {
    return out;
  }
  std::lognormal_distribution<double> latency(std::log(behavior.latency_median_ms),
                                              behavior.latency_sigma);
  out.latency_ms = std::max<TimestampMs>(1, static_cast<TimestampMs>(std::llround(latency(rng))));
  return out;
}

// --- Simulation -------------------------------------------------------------

bool Simulation::Later::operator()(const Event& a, const Event& b) const {
  if (a.at != b.at) return a.at > b.at;
  if (a.type != b.type) return static_cast<int>(a.type) > static_cast<int>(b.type);
  return a.seq > b.seq;
}

Simulation::Simulation(SimConfig config, MatchPolicy policy)
    : config_(std::move(config)),
      policy_(policy),
      population_rng_(derive(config_.seed, 1)),
      arrival_rng_(derive(config_.seed, 2)),
      selection_rng_(derive(config_.seed, 3)),
      response_rng_(derive(config_.seed, 4)) {
  config_.validate();
  policy_.validate();
  population_ = generate_population(config_, population_rng_);
  now_ = config_.start_time_ms;
  for (std::size_t i = 0; i < population_.profiles.size(); ++i) {
    index_of_.emplace(population_.profiles[i].translator_id, i);
    dispatcher_.append_translator(TranslatorRecord{now_, population_.profiles[i]});
  }
  next_arrival_ = next_arrival_after(now_);
}

void Simulation::set_policy(const MatchPolicy& policy) {
  policy.validate();
  policy_ = policy;
}

TimestampMs Simulation::next_arrival_after(TimestampMs t) {
  std::exponential_distribution<double> gap(config_.requests_per_hour / 3'600'000.0);
  return t + std::max<TimestampMs>(1, static_cast<TimestampMs>(std::llround(gap(arrival_rng_))));
}

void Simulation::push(TimestampMs at, EventType type, std::string id, Answer answer) {
  queue_.push(Event{at, type, seq_++, std::move(id), answer});
}

void Simulation::on_arrival(TimestampMs at) {
  TranslationRequest request;
  request.request_id = padded('r', ++requests_created_, 7);
  std::uniform_int_distribution<int> requester(1, 5000);
  request.requester_id = padded('u', static_cast<std::uint64_t>(requester(arrival_rng_)), 5);
  const auto& pair = config_.language_pairs[weighted_pick(config_.language_pairs, arrival_rng_)];
  request.source_language = pair.source;
  request.target_language = pair.target;
  request.created_at = at;
  std::bernoulli_distribution wants_preference(config_.preference_probability);
  if (wants_preference(arrival_rng_)) {
    std::uniform_int_distribution<int> gender(0, 3);
    request.preferences.gender_identity = static_cast<GenderIdentity>(gender(arrival_rng_));
  }

  const auto eligible = filter_candidates(request, population_.profiles, at, policy_);
  const auto ranked = model_ ? rank_candidates(eligible, &*model_, stats_, at)
                             : random_order(eligible, selection_rng_);
  const auto selected = select_pings(ranked, policy_, selection_rng_);
  const ActiveRequest& active = dispatcher_.open_request(request, selected, at, config_.timeout_ms);

  for (const auto& ping : active.pings) {
    const std::size_t idx = index_of_.at(ping.translator_id);
    const TranslatorProfile& profile = population_.profiles[idx];
    const int hour = local_hour(at, profile.timezone_offset_minutes);
    const FeatureVector x = feature_vector(profile, stats_.get(ping.translator_id), hour);
    const GroundTruthBehavior& behavior = population_.behaviors[idx];
    true_p_.emplace(ping.ping_id, behavior.yes_probability(x, hour));
    const SimulatedResponse response = simulate_response(behavior, x, hour, response_rng_);
    if (response.answer != Response::Null)
      push(at + *response.latency_ms, EventType::Response, ping.ping_id,
           response.answer == Response::Yes ? Answer::Yes : Answer::No);
  }
  push(active.deadline, EventType::Deadline, request.request_id);
}

void Simulation::run(std::size_t request_budget, std::size_t ping_budget, double hours_budget) {
  if (request_budget == 0 && ping_budget == 0 && !(hours_budget > 0.0))
    throw Error(ErrorCode::ConfigInvalid, "simulation needs a request, ping, or time budget");
  const std::size_t requests_at_start = requests_created_;
  const std::size_t log_pings_at_start = true_p_.size();
  const TimestampMs horizon =
      hours_budget > 0.0 ? now_ + static_cast<TimestampMs>(hours_budget * 3'600'000.0) : 0;

  auto budget_left = [&] {
    if (request_budget && requests_created_ - requests_at_start >= request_budget) return false;
    if (ping_budget && true_p_.size() - log_pings_at_start >= ping_budget) return false;
    if (horizon && next_arrival_ >= horizon) return false;
    return true;
  };

  bool arrivals_open = budget_left();
  if (arrivals_open) push(next_arrival_, EventType::Arrival, {});
  while (!queue_.empty()) {
    Event ev = queue_.top();
    queue_.pop();
    now_ = ev.at;
    switch (ev.type) {
      case EventType::Arrival:
        on_arrival(ev.at);
        next_arrival_ = next_arrival_after(ev.at);
        if (budget_left()) push(next_arrival_, EventType::Arrival, {});
        break;
      case EventType::Response:
        dispatcher_.handle_response(ev.id, ev.answer, ev.at);
        break;
      case EventType::Deadline: {
        const MatchOutcome outcome = dispatcher_.resolve(ev.id, ev.at);
        apply_resolution(stats_, log_, outcome.resolution);
        if (outcome.matched_translator_id) ++matches_[*outcome.matched_translator_id];
        break;
      }
    }
  }
  if (next_arrival_ <= now_) next_arrival_ = next_arrival_after(now_);
}

EpisodeResult Simulation::take_result() && {
  EpisodeResult out;
  out.metrics = dispatcher_.metrics();
  out.log = std::move(log_);
  out.true_yes_probability = std::move(true_p_);
  out.matches_per_translator = std::move(matches_);
  return out;
}

EpisodeResult run_episode(const SimConfig& config, const MatchPolicy& policy,
                          const std::optional<ResponseModel>& model) {
  config.validate();
  Simulation sim(config, policy);
  sim.set_model(model);
  sim.run(config.max_requests, config.max_pings, config.duration_hours);
  return std::move(sim).take_result();
}

// --- training and evaluation on simulated logs ------------------------------

std::size_t temporal_split_index(std::span<const LabeledRow> rows, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw Error(ErrorCode::ConfigInvalid, "train fraction must be in (0, 1)");
  auto cut = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(rows.size())));
  while (cut > 0 && cut < rows.size() && rows[cut].timestamp == rows[cut - 1].timestamp) ++cut;
  return cut;
}

std::vector<ScoredSample> score_rows(const ResponseModel& model, std::span<const LabeledRow> rows) {
  std::vector<ScoredSample> out;
  out.reserve(rows.size());
  for (const auto& row : rows)
    out.push_back({predict_probability(model, row.features()), row.label, row.segment});
  return out;
}

TrainEvalResult train_and_evaluate(const EventLog& log, const TrainConfig& train,
                                   double train_fraction, std::size_t segment_min_samples) {
  const auto rows = labeled_dataset(log);
  const std::size_t cut = temporal_split_index(rows, train_fraction);
  const std::span<const LabeledRow> train_rows(rows.data(), cut);
  const std::span<const LabeledRow> test_rows(rows.data() + cut, rows.size() - cut);
  if (test_rows.empty()) throw Error(ErrorCode::SingleClass, "held-out slice is empty");

  TrainEvalResult out;
  out.train_rows = train_rows.size();
  out.test_rows = test_rows.size();
  out.model = train_model(train_rows, train, &out.selection);
  out.test_scores = score_rows(out.model, test_rows);
  out.report = build_report(out.test_scores);
  out.segments = evaluate_by_segment(out.test_scores, segment_min_samples);

  // Ablation: the four profile features only, same lambda.
  const DesignMatrix train_m = design_matrix(train_rows);
  const DesignMatrix test_m = design_matrix(test_rows);
  const Eigen::Index profile_cols = static_cast<Eigen::Index>(kFeatureCount - kExperience);
  const LogisticFit profile_fit = fit_logistic(
      LogisticProblem{train_m.features.rightCols(profile_cols), train_m.labels, out.model.lambda},
      train.max_iterations, train.convergence_tolerance);
  std::vector<ScoredSample> profile_scores;
  profile_scores.reserve(test_rows.size());
  for (Eigen::Index i = 0; i < test_m.features.rows(); ++i) {
    const double z =
        test_m.features.row(i).tail(profile_cols).dot(profile_fit.weights) + profile_fit.intercept;
    profile_scores.push_back({sigmoid(z), static_cast<int>(test_m.labels(i)), {}});
  }
  out.profile_only_auc = auc(profile_scores);
  return out;
}

BootstrapResult bootstrap_train_eval(const SimConfig& config, const TrainConfig& train,
                                     const MatchPolicy& policy) {
  MatchPolicy explore = policy;
  explore.epsilon = 1.0;
  BootstrapResult out;
  out.episode = run_episode(config, explore, std::nullopt);
  out.result = train_and_evaluate(out.episode.log, train);
  return out;
}

double gini(std::vector<std::int64_t> counts) {
  if (counts.empty()) return 0.0;
  std::sort(counts.begin(), counts.end());
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::int64_t{0}));
  if (total == 0.0) return 0.0;
  const double n = static_cast<double>(counts.size());
  double weighted = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i)
    weighted += static_cast<double>(i + 1) * static_cast<double>(counts[i]);
  return 2.0 * weighted / (n * total) - (n + 1.0) / n;
}

std::vector<EpochReport> run_feedback_epochs(const SimConfig& config, const MatchPolicy& policy,
                                             const TrainConfig& train, int epochs,
                                             std::size_t requests_per_epoch) {
  if (epochs < 1 || requests_per_epoch < 1)
    throw Error(ErrorCode::ConfigInvalid, "epochs and requests_per_epoch must be >= 1");
  MatchPolicy explore = policy;
  explore.epsilon = 1.0;
  Simulation sim(config, explore);

  std::vector<EpochReport> reports;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    EpochReport report;
    report.epoch = epoch;
    if (epoch > 0) {
      const auto rows = labeled_dataset(sim.log());
      ResponseModel model = train_model(rows, train);
      report.model_lambda = model.lambda;
      sim.set_model(std::move(model));
      sim.set_policy(policy);
    }

    const MatchMetrics before = sim.dispatcher().metrics();
    std::unordered_map<TranslatorId, std::int64_t> matches_before;
    for (const auto& record : sim.log().records())
      if (const auto* r = std::get_if<ResolutionRecord>(&record); r && r->matched_translator_id)
        ++matches_before[*r->matched_translator_id];

    sim.run(requests_per_epoch, 0);

    const MatchMetrics& after = sim.dispatcher().metrics();
    MatchMetrics delta;
    delta.requests_total = after.requests_total - before.requests_total;
    delta.requests_matched = after.requests_matched - before.requests_matched;
    delta.match_times_ms.assign(after.match_times_ms.begin() + static_cast<std::ptrdiff_t>(before.match_times_ms.size()),
                                after.match_times_ms.end());
    const MetricsSummary summary = metrics_summary(delta);
    report.match_rate = summary.match_rate;
    report.median_match_time_ms = summary.median_match_time_ms;

    std::unordered_map<TranslatorId, std::int64_t> matches_now;
    for (const auto& record : sim.log().records())
      if (const auto* r = std::get_if<ResolutionRecord>(&record); r && r->matched_translator_id)
        ++matches_now[*r->matched_translator_id];
    std::vector<std::int64_t> counts;
    for (const auto& profile : sim.population().profiles)
      counts.push_back(matches_now[profile.translator_id] - matches_before[profile.translator_id]);
    report.match_gini = gini(std::move(counts));
    reports.push_back(report);
  }
  return reports;
}

}  // namespace pingmatch
