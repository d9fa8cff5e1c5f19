#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pingmatch {

// One row of the feature-importance report: exp(coefficient) per feature.
struct OddsRatio {
  std::string feature;
  double odds_ratio = 1.0;
  std::optional<double> std_across_folds;
};

struct ScoredSample {
  double score = 0.5;
  int label = 0;
  std::string segment;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // +inf for the (0,0) endpoint
};

struct PrPoint {
  double threshold = 0.0;
  std::optional<double> precision;  // absent when nothing is predicted positive
  double recall = 0.0;
};

struct LabelHistogram {
  std::vector<double> edges;     // bins + 1 shared edges over [0, 1]
  std::vector<double> positive;  // densities, integrate to 1 unless the class is empty
  std::vector<double> negative;
  bool positive_empty = false;
  bool negative_empty = false;
};

struct AccuracyReport {
  double accuracy_at_half = 0.0;
  double naive_accuracy = 0.0;
};

struct MetricReport {
  std::size_t samples = 0;
  std::size_t positives = 0;
  double auc = 0.5;
  std::vector<RocPoint> roc_points;
  std::vector<PrPoint> pr_points;
  double accuracy_at_half = 0.0;
  double naive_accuracy = 0.0;
  std::optional<double> precision_at_half;
  double recall_at_half = 0.0;
  LabelHistogram histogram_by_label;
};

// Mann-Whitney statistic with midranks; ties count one half. Throws SingleClass.
double auc(std::span<const ScoredSample> samples);

std::vector<RocPoint> roc_curve(std::span<const ScoredSample> samples);
double trapezoid_area(std::span<const RocPoint> points);

// Predict positive iff score >= threshold. Thresholds must be ascending.
std::vector<PrPoint> precision_recall_sweep(std::span<const ScoredSample> samples,
                                            std::span<const double> thresholds);

AccuracyReport accuracy_report(std::span<const ScoredSample> samples);

LabelHistogram probability_density_by_label(std::span<const ScoredSample> samples, int bins);

// Probability mass of one label's histogram in bins whose lower edge >= threshold.
double density_mass_at_or_above(const LabelHistogram& histogram, bool positive, double threshold);

std::vector<double> default_thresholds(int steps = 100);

MetricReport build_report(std::span<const ScoredSample> samples, int density_bins = 20);

struct SegmentEvaluation {
  std::map<std::string, MetricReport> reports;
  std::map<std::string, std::string> skipped;  // segment -> reason
};

SegmentEvaluation evaluate_by_segment(std::span<const ScoredSample> samples,
                                      std::size_t min_samples);

// Writes roc.csv, pr.csv, density.csv, odds_ratios.csv, segments.csv, summary.json.
struct ReportBundle {
  MetricReport overall;
  SegmentEvaluation segments;
  std::vector<OddsRatio> odds;
  double inset_threshold = 0.4;
  std::optional<double> profile_only_auc;
  // Extra scalars merged into summary.json (e.g. dispatch metrics); absent -> null.
  std::map<std::string, std::optional<double>> extra_scalars;
};

void write_report_bundle(const ReportBundle& bundle, const std::filesystem::path& dir);

}  // namespace pingmatch
