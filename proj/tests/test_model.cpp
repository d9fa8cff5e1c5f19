#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <unistd.h>

#include "pingmatch/error.hpp"
#include "pingmatch/evaluation.hpp"
#include "pingmatch/model.hpp"

using namespace pingmatch;

namespace {

// Mean logistic loss plus (lambda/2) w^2, written out independently of the library.
double toy_loss(const std::vector<double>& x, const std::vector<double>& y, double lambda, double w,
                double b) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = w * x[i] + b;
    total += std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) - y[i] * z;
  }
  return total / static_cast<double>(x.size()) + 0.5 * lambda * w * w;
}

// Exhaustive grid search, repeatedly zoomed around the best cell.
std::pair<double, double> grid_minimize(const std::vector<double>& x, const std::vector<double>& y,
                                        double lambda) {
  double cw = 0.0, cb = 0.0, half = 8.0;
  const int steps = 200;
  while (half > 1e-9) {
    double best = INFINITY, bw = cw, bb = cb;
    for (int i = 0; i <= steps; ++i) {
      for (int j = 0; j <= steps; ++j) {
        const double w = cw - half + 2.0 * half * i / steps;
        const double b = cb - half + 2.0 * half * j / steps;
        const double l = toy_loss(x, y, lambda, w, b);
        if (l < best) best = l, bw = w, bb = b;
      }
    }
    cw = bw;
    cb = bb;
    half *= 0.05;
  }
  return {cw, cb};
}

LogisticProblem random_problem(std::mt19937_64& rng, int n, int d, double lambda) {
  std::normal_distribution<double> g;
  LogisticProblem p;
  p.features.resize(n, d);
  p.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    double z = 0.0;
    for (int j = 0; j < d; ++j) {
      p.features(i, j) = g(rng);
      z += (j % 2 ? -0.7 : 0.9) * p.features(i, j);
    }
    p.labels(i) = std::bernoulli_distribution(sigmoid(z))(rng) ? 1.0 : 0.0;
  }
  p.lambda = lambda;
  return p;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() /
         ("pingmatch_model_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST(Predict, Examples) {
  ResponseModel m;
  EXPECT_EQ(predict_probability(m, {0.3, 0.9, 2, 1, 0, 1}), 0.5);
  m.intercept = std::log(3.0);
  EXPECT_NEAR(predict_probability(m, {}), 0.75, 1e-15);
  ResponseModel one;
  one.coefficients[kAvailable] = 1.3;
  FeatureVector x{};
  x[kAvailable] = 1.0;
  EXPECT_NEAR(predict_probability(one, x), 1.0 / (1.0 + std::exp(-1.3)), 1e-15);
}

TEST(Sigmoid, StableAtExtremes) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_GT(sigmoid(800.0), 0.0);
  EXPECT_EQ(sigmoid(-800.0), 0.0);
  EXPECT_TRUE(std::isfinite(sigmoid(-800.0)));
}

TEST(Fit, ToyProblemMatchesGridSearch) {
  const std::vector<double> x = {-1.0, 0.0, 1.0, 2.0};
  const std::vector<double> y = {0.0, 1.0, 0.0, 1.0};
  LogisticProblem p;
  p.features = Eigen::Map<const Eigen::VectorXd>(x.data(), 4);
  p.labels = Eigen::Map<const Eigen::VectorXd>(y.data(), 4);
  p.lambda = 1.0;
  const LogisticFit fit = fit_logistic(p, 100, 1e-12);
  const auto [w, b] = grid_minimize(x, y, 1.0);
  EXPECT_TRUE(fit.converged);
  EXPECT_NEAR(fit.weights(0), w, 1e-5);
  EXPECT_NEAR(fit.intercept, b, 1e-5);
}

TEST(Fit, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(3);
  const LogisticProblem p = random_problem(rng, 60, 6, 0.3);
  std::normal_distribution<double> g(0.0, 1.5);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd params(7);
    for (int i = 0; i < 7; ++i) params(i) = g(rng);
    const Eigen::VectorXd analytic = regularized_gradient(p, params);
    Eigen::VectorXd numeric(7);
    const double h = 1e-5;
    for (int i = 0; i < 7; ++i) {
      Eigen::VectorXd up = params, down = params;
      up(i) += h;
      down(i) -= h;
      numeric(i) = (regularized_loss(p, up) - regularized_loss(p, down)) / (2 * h);
    }
    EXPECT_LT((analytic - numeric).norm() / std::max(analytic.norm(), 1e-12), 1e-6);
  }
}

TEST(Fit, BalancedLabelsWithZeroFeatures) {
  LogisticProblem p;
  p.features = Eigen::MatrixXd::Zero(6, 3);
  p.labels.resize(6);
  p.labels << 1, 0, 1, 0, 1, 0;
  for (double lambda : {0.0, 0.1, 10.0}) {
    p.lambda = lambda;
    const LogisticFit fit = fit_logistic(p, 100, 1e-10);
    EXPECT_NEAR(fit.weights.norm(), 0.0, 1e-12);
    EXPECT_NEAR(fit.intercept, 0.0, 1e-12);
  }
}

TEST(Fit, HugeLambdaGivesBaseRateIntercept) {
  LogisticProblem p;
  p.features.resize(4, 1);
  p.features << -1, 0, 1, 2;
  p.labels.resize(4);
  p.labels << 0, 0, 1, 1;
  p.labels(0) = 1;  // base rate 3/4
  p.lambda = 1e6;
  const LogisticFit fit = fit_logistic(p, 100, 1e-12);
  EXPECT_NEAR(fit.weights(0), 0.0, 1e-5);
  EXPECT_NEAR(fit.intercept, std::log(0.75 / 0.25), 1e-5);
}

TEST(Fit, SingleClassIsRejected) {
  LogisticProblem p;
  p.features = Eigen::MatrixXd::Ones(5, 2);
  p.labels = Eigen::VectorXd::Zero(5);
  try {
    fit_logistic(p, 50, 1e-8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingleClassData);
  }
}

TEST(Fit, SeparableDataStillTerminatesWithRidge) {
  LogisticProblem p;
  p.features.resize(4, 1);
  p.features << -2, -1, 1, 2;
  p.labels.resize(4);
  p.labels << 0, 0, 1, 1;
  p.lambda = 1e-4;
  const LogisticFit fit = fit_logistic(p, 200, 1e-8);
  EXPECT_TRUE(std::isfinite(fit.weights(0)));
  EXPECT_GT(fit.weights(0), 1.0);
}

TEST(TemporalFolds, HundredRowsFourFolds) {
  const auto folds = temporal_folds(100, 4);
  ASSERT_EQ(folds.size(), 4u);
  EXPECT_EQ(folds[0], (FoldRange{20, 20, 40}));
  EXPECT_EQ(folds[1], (FoldRange{40, 40, 60}));
  EXPECT_EQ(folds[2], (FoldRange{60, 60, 80}));
  EXPECT_EQ(folds[3], (FoldRange{80, 80, 100}));
}

TEST(TemporalFolds, BoundariesSkipTimestampTies) {
  std::vector<TimestampMs> ts(100);
  for (std::size_t i = 0; i < ts.size(); ++i) ts[i] = static_cast<TimestampMs>(i);
  ts[20] = ts[19];  // row 20 ties row 19
  const auto folds = temporal_folds(100, 4, ts);
  EXPECT_EQ(folds[0], (FoldRange{21, 21, 40}));
  for (const auto& f : folds)
    EXPECT_LT(ts[f.train_end - 1], ts[f.validation_begin]);
}

TEST(TemporalFolds, TooFewRows) {
  try {
    temporal_folds(3, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FoldTooSmall);
  }
}

TEST(SelectLambda, SingleValueGrid) {
  std::mt19937_64 rng(8);
  const LogisticProblem p = random_problem(rng, 400, 3, 0.0);
  std::vector<TimestampMs> ts(400);
  for (std::size_t i = 0; i < ts.size(); ++i) ts[i] = static_cast<TimestampMs>(i);
  TrainConfig config;
  config.lambda_grid = {0.37};
  config.cv_folds = 4;
  const LambdaSelection sel = select_lambda(p.features, p.labels, ts, config);
  EXPECT_EQ(sel.lambda, 0.37);
  EXPECT_EQ(sel.fold_weights.size(), 4u);
}

// Two correlated features whose difference drives the label: a tiny lambda
// recovers the contrast, an enormous one collapses toward the marginal direction.
TEST(SelectLambda, SmallLambdaWinsOnSeparableContrast) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  const int n = 1000;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  std::vector<TimestampMs> ts(n);
  for (int i = 0; i < n; ++i) {
    const double a = g(rng);
    const double c = a + 0.3 * g(rng);
    X(i, 0) = a;
    X(i, 1) = c;
    y(i) = c - a + 0.05 * a > 0.0 ? 1.0 : 0.0;
    ts[static_cast<std::size_t>(i)] = i;
  }
  TrainConfig config;
  config.lambda_grid = {1e-4, 1e6};
  config.cv_folds = 4;
  const LambdaSelection sel = select_lambda(X, y, ts, config);

  // Oracle: fit each lambda on each fold and compare held-out AUCs directly.
  double mean_small = 0.0, mean_large = 0.0;
  for (const auto& f : temporal_folds(n, 4, ts)) {
    const auto tn = static_cast<Eigen::Index>(f.train_end);
    const auto vb = static_cast<Eigen::Index>(f.validation_begin);
    const auto vn = static_cast<Eigen::Index>(f.validation_end - f.validation_begin);
    for (double lambda : config.lambda_grid) {
      const LogisticFit fit =
          fit_logistic({X.topRows(tn), y.head(tn), lambda}, config.max_iterations, config.convergence_tolerance);
      std::vector<ScoredSample> s;
      for (Eigen::Index i = vb; i < vb + vn; ++i)
        s.push_back({X.row(i).dot(fit.weights) + fit.intercept, static_cast<int>(y(i)), {}});
      (lambda < 1.0 ? mean_small : mean_large) += auc(s) / 4.0;
    }
  }
  ASSERT_GT(mean_small, mean_large);
  EXPECT_EQ(sel.lambda, 1e-4);
  EXPECT_NEAR(sel.mean_auc[0], mean_small, 1e-9);
  EXPECT_NEAR(sel.mean_auc[1], mean_large, 1e-9);
}

TEST(SelectLambda, TiesGoToTheLargerLambda) {
  // One feature: every positive lambda ranks rows identically, so AUCs tie.
  std::mt19937_64 rng(2);
  const LogisticProblem p = random_problem(rng, 300, 1, 0.0);
  std::vector<TimestampMs> ts(300);
  for (std::size_t i = 0; i < ts.size(); ++i) ts[i] = static_cast<TimestampMs>(i);
  TrainConfig config;
  config.lambda_grid = {0.01, 1.0, 0.1};
  config.cv_folds = 3;
  EXPECT_EQ(select_lambda(p.features, p.labels, ts, config).lambda, 1.0);
}

TEST(SelectLambda, SingleClassFoldsAreSkippedWithWarning) {
  Eigen::MatrixXd X(100, 1);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(100);
  std::vector<TimestampMs> ts(100);
  for (int i = 0; i < 100; ++i) {
    X(i, 0) = (i * 37) % 11;
    ts[static_cast<std::size_t>(i)] = i;
    // Positives only appear late; the first fold's training slice is all negative.
    if (i >= 30 && i % 3 == 0) y(i) = 1.0;
  }
  TrainConfig config;
  config.cv_folds = 4;
  config.lambda_grid = {1.0};
  const LambdaSelection sel = select_lambda(X, y, ts, config);
  EXPECT_FALSE(sel.warnings.empty());
  EXPECT_FALSE(sel.fold_aucs[0][0].has_value());
  EXPECT_TRUE(sel.fold_aucs[0][3].has_value());

  Eigen::VectorXd none = Eigen::VectorXd::Zero(100);
  try {
    select_lambda(X, none, ts, config);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingleClassFold);
  }
}

TEST(OddsRatios, Examples) {
  ResponseModel m;
  m.coefficients[kOverallRate] = 0.0;
  m.coefficients[kPeriodicRate] = std::log(2.0);
  const auto ors = odds_ratios(m);
  ASSERT_EQ(ors.size(), kFeatureCount);
  EXPECT_EQ(ors[0].feature, "overall_response_rate");
  EXPECT_EQ(ors[0].odds_ratio, 1.0);
  EXPECT_NEAR(ors[1].odds_ratio, 2.0, 1e-15);
  EXPECT_FALSE(ors[1].std_across_folds.has_value());

  Coefficients a{}, b{};
  a[kPeriodicRate] = std::log(1.0);
  b[kPeriodicRate] = std::log(3.0);
  m.cv_fold_coefficients = {a, b};
  // sample std of {1, 3}
  EXPECT_NEAR(*odds_ratios(m)[1].std_across_folds, std::sqrt(2.0), 1e-12);
}

TEST(ModelFile, RoundTrip) {
  ResponseModel m;
  m.coefficients = {1.5, 0.25, -0.125, 3.0, 1e-9, 0.7};
  m.intercept = -2.75;
  m.lambda = 0.01;
  m.trained_on = 1234;
  m.cv_fold_coefficients = {m.coefficients, {0, 1, 2, 3, 4, 5}};
  m.iterations = 7;
  const auto path = temp_path("m.json");
  save_model(m, path);
  EXPECT_EQ(load_model(path), m);
  std::filesystem::remove(path);
}

TEST(ModelFile, RejectsBadFiles) {
  auto code = [](const std::string& text) {
    try {
      model_from_json(text);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Io;
  };
  const std::string names =
      R"("feature_names":["overall_response_rate","periodic_response_rate","experience_level","can_translate_documents","declared_available","multi_skill"])";
  const std::string good = R"({"schema_version":1,)" + names +
                           R"(,"coefficients":[1,2,3,4,5,6],"intercept":0,"lambda":1,"trained_on":1})";
  EXPECT_NO_THROW(model_from_json(good));
  EXPECT_EQ(code(R"({"schema_version":1,)" + names +
                 R"(,"coefficients":[1,2,3,4,5],"intercept":0,"lambda":1,"trained_on":1})"),
            ErrorCode::FeatureOrderMismatch);
  EXPECT_EQ(code(R"({"schema_version":1,)" + names +
                 R"(,"coefficients":[1,2,3,4,5,6],"intercept":0,"lambda":-1,"trained_on":1})"),
            ErrorCode::InvariantViolation);
  EXPECT_EQ(code(R"({"schema_version":2,)" + names +
                 R"(,"coefficients":[1,2,3,4,5,6],"intercept":0,"lambda":1,"trained_on":1})"),
            ErrorCode::VersionMismatch);
  EXPECT_EQ(code(R"({"schema_version":1,"feature_names":["a","b","c","d","e","f"],"coefficients":[1,2,3,4,5,6],"intercept":0,"lambda":1,"trained_on":1})"),
            ErrorCode::FeatureOrderMismatch);
  EXPECT_EQ(code("not json"), ErrorCode::ParseError);
}
