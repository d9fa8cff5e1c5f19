#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "pingmatch/error.hpp"
#include "pingmatch/simulator.hpp"

using namespace pingmatch;

namespace {

std::string dump(const EventLog& log) {
  std::stringstream out;
  write_log(log, out);
  return out.str();
}

SimConfig small_config() {
  SimConfig c;
  c.population_size = 200;
  c.max_requests = 150;
  return c;
}

GroundTruthBehavior flat_behavior(double intercept, double multiplier, double no_probability) {
  GroundTruthBehavior b;
  b.intercept = intercept;
  b.hourly_multiplier.fill(multiplier);
  b.explicit_no_probability = no_probability;
  return b;
}

double in_time_probability(const GroundTruthBehavior& b, TimestampMs timeout) {
  return 0.5 * std::erfc(-std::log(static_cast<double>(timeout) / b.latency_median_ms) /
                         (b.latency_sigma * std::sqrt(2.0)));
}

}  // namespace

TEST(Population, DeterministicForSeed) {
  SimConfig c = small_config();
  Rng a(5), b(5);
  const auto p = generate_population(c, a);
  const auto q = generate_population(c, b);
  EXPECT_EQ(p.profiles, q.profiles);
  EXPECT_EQ(p.intercept, q.intercept);
}

TEST(Population, UniqueIdsAndValidProfiles) {
  SimConfig c;
  c.population_size = 1000;
  Rng rng(1);
  const auto p = generate_population(c, rng);
  ASSERT_EQ(p.profiles.size(), 1000u);
  ASSERT_EQ(p.behaviors.size(), 1000u);
  std::set<std::string> ids;
  for (const auto& t : p.profiles) {
    ids.insert(t.translator_id);
    EXPECT_NO_THROW(validate(t));
  }
  EXPECT_EQ(ids.size(), 1000u);
}

TEST(Population, MultiSkillMarginalWithinThreeSigma) {
  SimConfig c;
  c.population_size = 10'000;
  c.multi_skill_probability = 0.3;
  Rng rng(17);
  const auto p = generate_population(c, rng);
  int count = 0;
  for (const auto& t : p.profiles) count += t.multi_skill;
  const double sd = std::sqrt(10'000 * 0.3 * 0.7);
  EXPECT_LT(std::abs(count - 3000.0), 3 * sd);
}

TEST(Population, ProfileNullZeroesFlagWeights) {
  SimConfig c = small_config();
  c.ground_truth = GroundTruthMode::ProfileNull;
  Rng rng(2);
  for (const auto& b : generate_population(c, rng).behaviors)
    for (double w : b.true_weights) EXPECT_EQ(w, 0.0);
}

TEST(SimulateResponse, ZeroMultiplierNeverSaysYes) {
  const auto b = flat_behavior(5.0, 0.0, 0.3);
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) EXPECT_NE(simulate_response(b, {}, 12, rng).answer, Response::Yes);
}

TEST(SimulateResponse, SaturatedScoreClampsBelowOne) {
  const auto b = flat_behavior(50.0, 1.0, 0.3);
  EXPECT_DOUBLE_EQ(b.yes_probability({}, 3), 0.999);
  Rng rng(2);
  int yes = 0;
  const int n = 10'000;
  for (int i = 0; i < n; ++i) yes += simulate_response(b, {}, 3, rng).answer == Response::Yes;
  const double sd = std::sqrt(n * 0.999 * 0.001);
  EXPECT_LT(std::abs(yes - n * 0.999), 3 * sd + 1);
}

TEST(SimulateResponse, NoExplicitNoMeansYesOrNull) {
  const auto b = flat_behavior(0.0, 1.0, 0.0);
  Rng rng(3);
  int yes = 0, null = 0;
  for (int i = 0; i < 5000; ++i) {
    const auto r = simulate_response(b, {}, 8, rng);
    ASSERT_NE(r.answer, Response::No);
    yes += r.answer == Response::Yes;
    null += r.answer == Response::Null;
    EXPECT_EQ(r.latency_ms.has_value(), r.answer != Response::Null);
  }
  EXPECT_GT(yes, 0);
  EXPECT_GT(null, 0);
}

TEST(Calibration, AverageMatchesTarget) {
  SimConfig c = small_config();
  Rng rng(4);
  auto p = generate_population(c, rng);
  const double b = calibrate_intercept(p, 0.1);
  double mean = 0.0;
  for (std::size_t i = 0; i < p.behaviors.size(); ++i) {
    auto shifted = p.behaviors[i];
    shifted.intercept = b;
    for (int h = 0; h < kHoursPerDay; ++h)
      mean += shifted.yes_probability(feature_vector(p.profiles[i], {}, h), h);
  }
  mean /= static_cast<double>(p.behaviors.size() * kHoursPerDay);
  EXPECT_NEAR(mean, 0.1, 1e-6);
}

TEST(Episode, DeterministicForSeed) {
  const SimConfig c = small_config();
  const auto a = run_episode(c, {}, std::nullopt);
  const auto b = run_episode(c, {}, std::nullopt);
  EXPECT_EQ(dump(a.log), dump(b.log));
  EXPECT_EQ(a.metrics.requests_total, b.metrics.requests_total);
  EXPECT_EQ(a.metrics.match_times_ms, b.metrics.match_times_ms);

  SimConfig other = c;
  other.seed = 2;
  EXPECT_NE(dump(run_episode(other, {}, std::nullopt).log), dump(a.log));
}

TEST(Episode, LogSurvivesRoundTripAndReplay) {
  const auto r = run_episode(small_config(), {}, std::nullopt);
  std::stringstream buffer(dump(r.log));
  const EventLog reread = read_log(buffer);
  EXPECT_EQ(reread.size(), r.log.size());
  const auto report = replay(reread);
  EXPECT_EQ(report.resolutions, 150u);
  EXPECT_TRUE(report.identical());
  EXPECT_EQ(r.metrics.requests_total, 150);
  EXPECT_FALSE(labeled_dataset(reread).empty());
}

TEST(Episode, InvalidConfig) {
  SimConfig c;
  c.population_size = 0;
  try {
    run_episode(c, {}, std::nullopt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigInvalid);
  }
}

TEST(Episode, PositiveRateNearSixPercent) {
  SimConfig c;
  c.max_requests = 600;
  const auto r = run_episode(c, {}, std::nullopt);
  const auto rows = labeled_dataset(r.log);
  double yes = 0.0;
  for (const auto& row : rows) yes += row.label;
  const double rate = yes / static_cast<double>(rows.size());
  EXPECT_GE(rate, 0.04);
  EXPECT_LE(rate, 0.08);
}

// Under full exploration the observed in-time yes count matches the sum of
// each ping's ground-truth probability times its chance to land before the deadline.
TEST(Episode, ExplorationYesRateMatchesGroundTruth) {
  SimConfig c;
  c.max_requests = 0;
  c.max_pings = 5000;
  MatchPolicy explore;
  explore.epsilon = 1.0;
  const auto r = run_episode(c, explore, std::nullopt);

  Simulation sim(c, explore);
  const auto& pop = sim.population();
  std::unordered_map<TranslatorId, const GroundTruthBehavior*> behavior;
  for (std::size_t i = 0; i < pop.profiles.size(); ++i)
    behavior[pop.profiles[i].translator_id] = &pop.behaviors[i];

  double expected = 0.0, variance = 0.0, observed = 0.0;
  std::size_t n = 0;
  for (const auto& row : labeled_dataset(r.log)) {
    const double q = r.true_yes_probability.at(row.ping_id) *
                     in_time_probability(*behavior.at(row.translator.translator_id), c.timeout_ms);
    expected += q;
    variance += q * (1.0 - q);
    observed += row.label;
    ++n;
  }
  ASSERT_GE(n, 5000u);
  EXPECT_LT(std::abs(observed - expected), 3.0 * std::sqrt(variance))
      << "observed " << observed << " expected " << expected;
}

TEST(Split, AdvancesPastTies) {
  std::vector<LabeledRow> rows(10);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].timestamp = static_cast<TimestampMs>(i / 3);
  // 0.5 * 10 = 5 lands inside the tie block {3, 4, 5}.
  EXPECT_EQ(temporal_split_index(rows, 0.5), 6u);
  EXPECT_EQ(temporal_split_index(rows, 0.3), 3u);
}

TEST(Gini, Examples) {
  EXPECT_EQ(gini({5, 5, 5, 5}), 0.0);
  EXPECT_NEAR(gini({0, 0, 0, 10}), 0.75, 1e-12);
  EXPECT_NEAR(gini({1, 2, 3, 4}), 0.25, 1e-12);
  EXPECT_EQ(gini({0, 0}), 0.0);
}

TEST(Bootstrap, ProfileNullFlagsCarryNoSignal) {
  SimConfig c;
  c.ground_truth = GroundTruthMode::ProfileNull;
  c.max_requests = 0;
  c.max_pings = 50'000;
  const auto b = bootstrap_train_eval(c);
  for (const auto& o : odds_ratios(b.result.model)) {
    if (o.feature == "overall_response_rate" || o.feature == "periodic_response_rate") continue;
    EXPECT_GE(o.odds_ratio, 0.8) << o.feature;
    EXPECT_LE(o.odds_ratio, 1.25) << o.feature;
  }
}

TEST(FeedbackEpochs, ReportsEachEpoch) {
  SimConfig c = small_config();
  MatchPolicy p;
  p.epsilon = 0.1;
  TrainConfig t;
  t.lambda_grid = {0.01, 1.0};
  t.cv_folds = 3;
  const auto epochs = run_feedback_epochs(c, p, t, 3, 400);
  ASSERT_EQ(epochs.size(), 3u);
  EXPECT_FALSE(epochs[0].model_lambda.has_value());
  EXPECT_TRUE(epochs[1].model_lambda.has_value());
  for (const auto& e : epochs) {
    EXPECT_GE(e.match_gini, 0.0);
    EXPECT_LE(e.match_gini, 1.0);
    EXPECT_GT(e.match_rate, 0.0);
  }
}
