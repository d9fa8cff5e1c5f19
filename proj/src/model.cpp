#include "pingmatch/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pingmatch/error.hpp"
#include "pingmatch/evaluation.hpp"

namespace pingmatch {

using nlohmann::json;

namespace {

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

Eigen::VectorXd linear_scores(const LogisticProblem& p, const Eigen::VectorXd& params) {
  const Eigen::Index d = p.features.cols();
  return (p.features * params.head(d)).array() + params(d);
}

void check_labels(const Eigen::VectorXd& labels) {
  bool has_pos = false;
  bool has_neg = false;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels(i) == 1.0) {
      has_pos = true;
    } else if (labels(i) == 0.0) {
      has_neg = true;
    } else {
      throw Error(ErrorCode::InvariantViolation, "labels must be 0 or 1");
    }
  }
  if (!has_pos || !has_neg)
    throw Error(ErrorCode::SingleClassData, "training data needs both classes");
}

bool has_both_classes(const Eigen::VectorXd& labels) {
  const double sum = labels.sum();
  return sum > 0.0 && sum < static_cast<double>(labels.size());
}

Coefficients to_coefficients(const Eigen::VectorXd& weights) {
  Coefficients c{};
  for (std::size_t i = 0; i < kFeatureCount; ++i) c[i] = weights(static_cast<Eigen::Index>(i));
  return c;
}

}  // namespace

void TrainConfig::validate() const {
  if (lambda_grid.empty()) throw Error(ErrorCode::ConfigInvalid, "lambda_grid is empty");
  for (double l : lambda_grid)
    if (!(l > 0.0) || !std::isfinite(l))
      throw Error(ErrorCode::ConfigInvalid, "lambda_grid values must be finite and > 0");
  if (cv_folds < 2) throw Error(ErrorCode::ConfigInvalid, "cv_folds must be >= 2");
  if (max_iterations < 1) throw Error(ErrorCode::ConfigInvalid, "max_iterations must be >= 1");
  if (!(convergence_tolerance > 0.0))
    throw Error(ErrorCode::ConfigInvalid, "convergence_tolerance must be > 0");
}

void validate(const ResponseModel& model) {
  if (model.feature_names.size() != kFeatureCount ||
      !std::equal(model.feature_names.begin(), model.feature_names.end(), kFeatureNames.begin()))
    throw Error(ErrorCode::FeatureOrderMismatch, "feature_names differ from the canonical order");
  if (!(model.lambda >= 0.0) || !std::isfinite(model.lambda))
    throw Error(ErrorCode::InvariantViolation, "lambda must be finite and >= 0");
  for (double c : model.coefficients)
    if (!std::isfinite(c)) throw Error(ErrorCode::InvariantViolation, "non-finite coefficient");
  if (!std::isfinite(model.intercept))
    throw Error(ErrorCode::InvariantViolation, "non-finite intercept");
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double predict_probability(const ResponseModel& model, const FeatureVector& x) {
  double z = model.intercept;
  for (std::size_t i = 0; i < kFeatureCount; ++i) z += model.coefficients[i] * x[i];
  return sigmoid(z);
}

// --- objective --------------------------------------------------------------

double regularized_loss(const LogisticProblem& p, const Eigen::VectorXd& params) {
  const Eigen::Index d = p.features.cols();
  const Eigen::VectorXd z = linear_scores(p, params);
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) total += softplus(z(i)) - p.labels(i) * z(i);
  const double n = static_cast<double>(p.features.rows());
  return total / n + 0.5 * p.lambda * params.head(d).squaredNorm();
}

Eigen::VectorXd regularized_gradient(const LogisticProblem& p, const Eigen::VectorXd& params) {
  const Eigen::Index d = p.features.cols();
  const Eigen::VectorXd z = linear_scores(p, params);
  Eigen::VectorXd residual(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) residual(i) = sigmoid(z(i)) - p.labels(i);
  const double n = static_cast<double>(p.features.rows());
  Eigen::VectorXd g(d + 1);
  g.head(d) = p.features.transpose() * residual / n + p.lambda * params.head(d);
  g(d) = residual.sum() / n;
  return g;
}

namespace {

Eigen::MatrixXd regularized_hessian(const LogisticProblem& p, const Eigen::VectorXd& params) {
  const Eigen::Index d = p.features.cols();
  const Eigen::Index n = p.features.rows();
  const Eigen::VectorXd z = linear_scores(p, params);
  Eigen::MatrixXd augmented(n, d + 1);
  augmented.leftCols(d) = p.features;
  augmented.col(d).setOnes();
  Eigen::VectorXd weights(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = sigmoid(z(i));
    weights(i) = s * (1.0 - s);
  }
  Eigen::MatrixXd h =
      augmented.transpose() * weights.asDiagonal() * augmented / static_cast<double>(n);
  h.diagonal().head(d).array() += p.lambda;
  return h;
}

}  // namespace

LogisticFit fit_logistic(const LogisticProblem& p, int max_iterations, double tolerance) {
  if (p.features.rows() < 2) throw Error(ErrorCode::SingleClassData, "need at least 2 rows");
  if (p.labels.size() != p.features.rows())
    throw Error(ErrorCode::InvariantViolation, "labels and features differ in length");
  check_labels(p.labels);

  const Eigen::Index d = p.features.cols();
  Eigen::VectorXd params = Eigen::VectorXd::Zero(d + 1);
  double loss = regularized_loss(p, params);
  if (!std::isfinite(loss)) throw Error(ErrorCode::NonFiniteLoss, "loss at zero is not finite");

  LogisticFit result;
  int iteration = 0;
  for (; iteration < max_iterations; ++iteration) {
    const Eigen::VectorXd g = regularized_gradient(p, params);
    result.gradient_max_norm = g.cwiseAbs().maxCoeff();
    if (result.gradient_max_norm < tolerance) {
      result.converged = true;
      break;
    }

    Eigen::MatrixXd h = regularized_hessian(p, params);
    Eigen::VectorXd step;
    double ridge = 0.0;
    for (int attempt = 0; attempt < 12; ++attempt) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(h + ridge * Eigen::MatrixXd::Identity(d + 1, d + 1));
      if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        step = -ldlt.solve(g);
        if (step.allFinite() && step.dot(g) < 0.0) break;
      }
      ridge = ridge == 0.0 ? 1e-10 : ridge * 100.0;
      step.resize(0);
    }
    if (step.size() == 0) step = -g;

    const double slope = step.dot(g);
    double t = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
      const Eigen::VectorXd candidate = params + t * step;
      const double candidate_loss = regularized_loss(p, candidate);
      if (std::isnan(candidate_loss))
        throw Error(ErrorCode::NonFiniteLoss, "loss became NaN during line search");
      if (candidate_loss <= loss + 1e-4 * t * slope) {
        params = candidate;
        loss = candidate_loss;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No representable descent left: the gradient is at floating-point noise.
      ++iteration;
      result.gradient_max_norm = regularized_gradient(p, params).cwiseAbs().maxCoeff();
      result.converged = result.gradient_max_norm < tolerance;
      break;
    }
  }
  if (iteration == max_iterations && !result.converged) {
    result.gradient_max_norm = regularized_gradient(p, params).cwiseAbs().maxCoeff();
    result.converged = result.gradient_max_norm < tolerance;
  }
  if (!std::isfinite(loss) || !params.allFinite())
    throw Error(ErrorCode::NonFiniteLoss, "fit diverged");

  result.weights = params.head(d);
  result.intercept = params(d);
  result.loss = loss;
  result.iterations = iteration;
  return result;
}

// --- temporal cross-validation ----------------------------------------------

std::vector<FoldRange> temporal_folds(std::size_t rows, int folds,
                                      std::span<const TimestampMs> timestamps) {
  if (folds < 2) throw Error(ErrorCode::ConfigInvalid, "cv_folds must be >= 2");
  if (!timestamps.empty() && timestamps.size() != rows)
    throw Error(ErrorCode::InvariantViolation, "timestamps and rows differ in length");

  const auto k_total = static_cast<std::size_t>(folds) + 1;
  std::vector<std::size_t> bounds;
  bounds.reserve(k_total + 1);
  for (std::size_t k = 1; k <= k_total; ++k) {
    std::size_t b = k == k_total ? rows : k * rows / k_total;
    if (!timestamps.empty())
      while (b > 0 && b < rows && timestamps[b] == timestamps[b - 1]) ++b;
    if (!bounds.empty()) b = std::max(b, bounds.back());
    bounds.push_back(b);
  }

  std::vector<FoldRange> out;
  for (std::size_t k = 0; k + 1 < bounds.size(); ++k) {
    FoldRange f{bounds[k], bounds[k], bounds[k + 1]};
    if (f.train_end == 0 || f.validation_end == f.validation_begin)
      throw Error(ErrorCode::FoldTooSmall, "fold " + std::to_string(k + 1) + " of " +
                                               std::to_string(folds) + " is empty for " +
                                               std::to_string(rows) + " rows");
    out.push_back(f);
  }
  return out;
}

LambdaSelection select_lambda(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                              std::span<const TimestampMs> timestamps,
                              const TrainConfig& config) {
  config.validate();
  if (!std::is_sorted(timestamps.begin(), timestamps.end()))
    throw Error(ErrorCode::InvariantViolation, "rows must be sorted by timestamp");

  const auto folds = temporal_folds(static_cast<std::size_t>(features.rows()), config.cv_folds,
                                    timestamps);
  LambdaSelection sel;
  sel.grid = config.lambda_grid;

  std::vector<bool> usable(folds.size(), true);
  for (std::size_t k = 0; k < folds.size(); ++k) {
    const auto& f = folds[k];
    const auto train_n = static_cast<Eigen::Index>(f.train_end);
    const auto val_n = static_cast<Eigen::Index>(f.validation_end - f.validation_begin);
    const auto val_b = static_cast<Eigen::Index>(f.validation_begin);
    if (!has_both_classes(labels.head(train_n)) || !has_both_classes(labels.segment(val_b, val_n))) {
      usable[k] = false;
      sel.warnings.push_back("fold " + std::to_string(k + 1) +
                             " skipped: training or validation slice has a single class");
    }
  }
  if (std::none_of(usable.begin(), usable.end(), [](bool u) { return u; }))
    throw Error(ErrorCode::SingleClassFold, "every fold has a single-class slice");

  std::vector<std::vector<Eigen::VectorXd>> weights_by_lambda;
  for (double lambda : config.lambda_grid) {
    std::vector<std::optional<double>> aucs(folds.size());
    std::vector<Eigen::VectorXd> fold_weights;
    double sum = 0.0;
    int count = 0;
    for (std::size_t k = 0; k < folds.size(); ++k) {
      if (!usable[k]) continue;
      const auto& f = folds[k];
      const auto train_n = static_cast<Eigen::Index>(f.train_end);
      LogisticProblem problem{features.topRows(train_n), labels.head(train_n), lambda};
      const LogisticFit fit =
          fit_logistic(problem, config.max_iterations, config.convergence_tolerance);

      std::vector<ScoredSample> scored;
      scored.reserve(f.validation_end - f.validation_begin);
      for (std::size_t i = f.validation_begin; i < f.validation_end; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const double z = features.row(row).dot(fit.weights) + fit.intercept;
        scored.push_back({sigmoid(z), static_cast<int>(labels(row)), {}});
      }
      aucs[k] = auc(scored);
      sum += *aucs[k];
      ++count;
      Eigen::VectorXd packed(fit.weights.size() + 1);
      packed << fit.weights, fit.intercept;
      fold_weights.push_back(std::move(packed));
    }
    sel.fold_aucs.push_back(std::move(aucs));
    sel.mean_auc.push_back(sum / count);
    weights_by_lambda.push_back(std::move(fold_weights));
  }

  std::size_t best = 0;
  for (std::size_t g = 1; g < sel.grid.size(); ++g) {
    const bool better = sel.mean_auc[g] > sel.mean_auc[best] ||
                        (sel.mean_auc[g] == sel.mean_auc[best] && sel.grid[g] > sel.grid[best]);
    if (better) best = g;
  }
  sel.lambda = sel.grid[best];
  sel.fold_weights = std::move(weights_by_lambda[best]);
  return sel;
}

// --- canonical model --------------------------------------------------------

DesignMatrix design_matrix(std::span<const LabeledRow> rows) {
  DesignMatrix m;
  const auto n = static_cast<Eigen::Index>(rows.size());
  m.features.resize(n, static_cast<Eigen::Index>(kFeatureCount));
  m.labels.resize(n);
  m.timestamps.reserve(rows.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    const FeatureVector x = row.features();
    for (std::size_t j = 0; j < kFeatureCount; ++j) m.features(i, static_cast<Eigen::Index>(j)) = x[j];
    m.labels(i) = row.label;
    m.timestamps.push_back(row.timestamp);
  }
  return m;
}

ResponseModel fit(std::span<const LabeledRow> rows, double lambda, const TrainConfig& config) {
  if (!(lambda >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "lambda must be >= 0");
  const DesignMatrix m = design_matrix(rows);
  const LogisticFit result = fit_logistic(LogisticProblem{m.features, m.labels, lambda},
                                          config.max_iterations, config.convergence_tolerance);
  ResponseModel model;
  model.coefficients = to_coefficients(result.weights);
  model.intercept = result.intercept;
  model.lambda = lambda;
  model.trained_on = static_cast<std::int64_t>(rows.size());
  model.converged = result.converged;
  model.iterations = result.iterations;
  return model;
}

LambdaSelection select_lambda(std::span<const LabeledRow> rows, const TrainConfig& config) {
  const DesignMatrix m = design_matrix(rows);
  return select_lambda(m.features, m.labels, m.timestamps, config);
}

ResponseModel train_model(std::span<const LabeledRow> rows, const TrainConfig& config,
                          LambdaSelection* selection) {
  LambdaSelection sel = select_lambda(rows, config);
  ResponseModel model = fit(rows, sel.lambda, config);
  for (const auto& w : sel.fold_weights) model.cv_fold_coefficients.push_back(to_coefficients(w));
  if (selection) *selection = std::move(sel);
  return model;
}

std::vector<OddsRatio> odds_ratios(const ResponseModel& model) {
  std::vector<OddsRatio> out;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    OddsRatio r{model.feature_names[i], std::exp(model.coefficients[i]), std::nullopt};
    const auto& folds = model.cv_fold_coefficients;
    if (!folds.empty()) {
      double mean = 0.0;
      for (const auto& c : folds) mean += std::exp(c[i]);
      mean /= static_cast<double>(folds.size());
      double ss = 0.0;
      for (const auto& c : folds) ss += (std::exp(c[i]) - mean) * (std::exp(c[i]) - mean);
      r.std_across_folds =
          folds.size() > 1 ? std::sqrt(ss / static_cast<double>(folds.size() - 1)) : 0.0;
    }
    out.push_back(std::move(r));
  }
  return out;
}

// --- persistence ------------------------------------------------------------

std::string model_to_json(const ResponseModel& model) {
  validate(model);
  json folds = json::array();
  for (const auto& c : model.cv_fold_coefficients) folds.push_back(c);
  json j = {{"schema_version", kModelSchemaVersion},
            {"feature_names", model.feature_names},
            {"coefficients", model.coefficients},
            {"intercept", model.intercept},
            {"lambda", model.lambda},
            {"trained_on", model.trained_on},
            {"cv_fold_coefficients", std::move(folds)},
            {"converged", model.converged},
            {"iterations", model.iterations}};
  return j.dump(2) + "\n";
}

ResponseModel model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("model file: ") + e.what());
  }
  try {
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "model file is not a JSON object");
    static const std::set<std::string> kKnown = {"schema_version", "feature_names", "coefficients",
                                                 "intercept",      "lambda",        "trained_on",
                                                 "cv_fold_coefficients", "converged",
                                                 "iterations"};
    for (const auto& [key, _] : j.items())
      if (!kKnown.count(key)) throw Error(ErrorCode::ParseError, "unknown model field '" + key + "'");
    if (!j.contains("schema_version") || j.at("schema_version").get<int>() != kModelSchemaVersion)
      throw Error(ErrorCode::VersionMismatch,
                  "expected schema_version " + std::to_string(kModelSchemaVersion));

    ResponseModel model;
    model.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    const auto coefficients = j.at("coefficients").get<std::vector<double>>();
    if (coefficients.size() != kFeatureCount)
      throw Error(ErrorCode::FeatureOrderMismatch,
                  "expected " + std::to_string(kFeatureCount) + " coefficients, got " +
                      std::to_string(coefficients.size()));
    std::copy(coefficients.begin(), coefficients.end(), model.coefficients.begin());
    model.intercept = j.at("intercept").get<double>();
    model.lambda = j.at("lambda").get<double>();
    model.trained_on = j.at("trained_on").get<std::int64_t>();
    if (j.contains("cv_fold_coefficients")) {
      for (const auto& fold : j.at("cv_fold_coefficients")) {
        const auto c = fold.get<std::vector<double>>();
        if (c.size() != kFeatureCount)
          throw Error(ErrorCode::FeatureOrderMismatch, "fold coefficient vector has wrong length");
        Coefficients arr{};
        std::copy(c.begin(), c.end(), arr.begin());
        model.cv_fold_coefficients.push_back(arr);
      }
    }
    if (j.contains("converged")) model.converged = j.at("converged").get<bool>();
    if (j.contains("iterations")) model.iterations = j.at("iterations").get<int>();
    validate(model);
    return model;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("model file: ") + e.what());
  }
}

void save_model(const ResponseModel& model, const std::filesystem::path& path) {
  const std::string text = model_to_json(model);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write-then-rename so readers never see a partial file.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write model '" + path.string() + "'");
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

ResponseModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open model '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

}  // namespace pingmatch
