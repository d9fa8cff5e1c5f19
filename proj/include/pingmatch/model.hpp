#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pingmatch/evaluation.hpp"
#include "pingmatch/event_log.hpp"
#include "pingmatch/features.hpp"

namespace pingmatch {

inline constexpr int kModelSchemaVersion = 1;

struct TrainConfig {
  std::vector<double> lambda_grid = {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0};
  int cv_folds = 5;
  int max_iterations = 100;
  double convergence_tolerance = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

using Coefficients = std::array<double, kFeatureCount>;

struct ResponseModel {
  Coefficients coefficients{};
  double intercept = 0.0;
  double lambda = 0.0;
  std::vector<std::string> feature_names{kFeatureNames.begin(), kFeatureNames.end()};
  std::int64_t trained_on = 0;
  std::vector<Coefficients> cv_fold_coefficients;
  bool converged = true;
  int iterations = 0;

  bool operator==(const ResponseModel&) const = default;
};

void validate(const ResponseModel& model);

double sigmoid(double z);
double predict_probability(const ResponseModel& model, const FeatureVector& x);

// --- generic L2-regularized logistic regression ---------------------------
//
// Objective: mean negative log-likelihood + (lambda / 2) * |w|^2.
// The intercept is not penalized. Parameters are packed as [w..., b].

struct LogisticProblem {
  Eigen::MatrixXd features;  // n x d
  Eigen::VectorXd labels;    // n, values in {0, 1}
  double lambda = 0.0;

  std::size_t rows() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t dims() const { return static_cast<std::size_t>(features.cols()); }
};

double regularized_loss(const LogisticProblem& problem, const Eigen::VectorXd& params);
Eigen::VectorXd regularized_gradient(const LogisticProblem& problem,
                                     const Eigen::VectorXd& params);

struct LogisticFit {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double loss = 0.0;
  double gradient_max_norm = 0.0;
  int iterations = 0;
  bool converged = false;  // gradient max-norm below tolerance; else max_iterations hit
};

// Damped Newton with backtracking. Throws SingleClassData or NonFiniteLoss.
LogisticFit fit_logistic(const LogisticProblem& problem, int max_iterations, double tolerance);

// --- temporal cross-validation ----------------------------------------------

struct FoldRange {
  std::size_t train_end = 0;  // training rows [0, train_end)
  std::size_t validation_begin = 0;
  std::size_t validation_end = 0;

  bool operator==(const FoldRange&) const = default;
};

// Expanding-window folds: fold k trains on the first k/(folds+1) of the rows
// and validates on the following slice. When timestamps are supplied, each
// boundary is advanced past timestamp ties so validation is strictly later.
std::vector<FoldRange> temporal_folds(std::size_t rows, int folds,
                                      std::span<const TimestampMs> timestamps = {});

struct LambdaSelection {
  double lambda = 0.0;
  std::vector<double> grid;
  // fold_aucs[g][k]: validation AUC of grid[g] on fold k; absent if the fold was skipped.
  std::vector<std::vector<std::optional<double>>> fold_aucs;
  std::vector<double> mean_auc;
  std::vector<Eigen::VectorXd> fold_weights;  // per usable fold, at the chosen lambda
  std::vector<std::string> warnings;
};

// Rows must be sorted by timestamp. Picks the grid value with the highest
// mean validation AUC, breaking ties toward the larger lambda.
LambdaSelection select_lambda(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                              std::span<const TimestampMs> timestamps, const TrainConfig& config);

// --- model over the canonical feature vector --------------------------------

struct DesignMatrix {
  Eigen::MatrixXd features;
  Eigen::VectorXd labels;
  std::vector<TimestampMs> timestamps;
};

DesignMatrix design_matrix(std::span<const LabeledRow> rows);

ResponseModel fit(std::span<const LabeledRow> rows, double lambda, const TrainConfig& config);
LambdaSelection select_lambda(std::span<const LabeledRow> rows, const TrainConfig& config);

// select_lambda followed by a final fit on all rows; keeps per-fold coefficients.
ResponseModel train_model(std::span<const LabeledRow> rows, const TrainConfig& config,
                          LambdaSelection* selection = nullptr);

std::vector<OddsRatio> odds_ratios(const ResponseModel& model);

std::string model_to_json(const ResponseModel& model);
ResponseModel model_from_json(const std::string& text);
void save_model(const ResponseModel& model, const std::filesystem::path& path);
ResponseModel load_model(const std::filesystem::path& path);

}  // namespace pingmatch
