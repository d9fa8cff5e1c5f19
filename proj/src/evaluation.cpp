#include "pingmatch/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "pingmatch/error.hpp"

namespace pingmatch {

namespace {

struct ClassCounts {
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

ClassCounts count_classes(std::span<const ScoredSample> samples) {
  ClassCounts c;
  for (const auto& s : samples) (s.label == 1 ? c.positives : c.negatives)++;
  return c;
}

ClassCounts require_both_classes(std::span<const ScoredSample> samples) {
  const ClassCounts c = count_classes(samples);
  if (c.positives == 0 || c.negatives == 0)
    throw Error(ErrorCode::SingleClass,
                "need both classes (positives=" + std::to_string(c.positives) +
                    ", negatives=" + std::to_string(c.negatives) + ")");
  return c;
}

std::vector<std::size_t> order_by_score_desc(std::span<const ScoredSample> samples) {
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return samples[a].score > samples[b].score;
  });
  return idx;
}

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  return out;
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

double auc(std::span<const ScoredSample> samples) {
  const ClassCounts c = require_both_classes(samples);

  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return samples[a].score < samples[b].score; });

  // Sum of midranks of the positives; ranks are 1-based.
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    std::size_t tied_positives = 0;
    while (j < idx.size() && samples[idx[j]].score == samples[idx[i]].score) {
      tied_positives += samples[idx[j]].label == 1 ? 1 : 0;
      ++j;
    }
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    positive_rank_sum += midrank * static_cast<double>(tied_positives);
    i = j;
  }
  const double p = static_cast<double>(c.positives);
  const double n = static_cast<double>(c.negatives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

std::vector<RocPoint> roc_curve(std::span<const ScoredSample> samples) {
  const ClassCounts c = require_both_classes(samples);
  const auto idx = order_by_score_desc(samples);
  const double p = static_cast<double>(c.positives);
  const double n = static_cast<double>(c.negatives);

  std::vector<RocPoint> points{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t i = 0;
  while (i < idx.size()) {
    const double threshold = samples[idx[i]].score;
    while (i < idx.size() && samples[idx[i]].score == threshold) {
      (samples[idx[i]].label == 1 ? tp : fp)++;
      ++i;
    }
    points.push_back({static_cast<double>(fp) / n, static_cast<double>(tp) / p, threshold});
  }
  return points;
}

double trapezoid_area(std::span<const RocPoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i)
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
  return area;
}

std::vector<PrPoint> precision_recall_sweep(std::span<const ScoredSample> samples,
                                            std::span<const double> thresholds) {
  if (!std::is_sorted(thresholds.begin(), thresholds.end()))
    throw Error(ErrorCode::InvariantViolation, "thresholds must be sorted ascending");

  std::vector<double> pos_scores;
  std::vector<double> neg_scores;
  for (const auto& s : samples) (s.label == 1 ? pos_scores : neg_scores).push_back(s.score);
  std::sort(pos_scores.begin(), pos_scores.end());
  std::sort(neg_scores.begin(), neg_scores.end());

  auto at_or_above = [](const std::vector<double>& sorted, double t) {
    return static_cast<std::size_t>(sorted.end() -
                                    std::lower_bound(sorted.begin(), sorted.end(), t));
  };

  std::vector<PrPoint> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    const std::size_t tp = at_or_above(pos_scores, t);
    const std::size_t fp = at_or_above(neg_scores, t);
    PrPoint point{t, std::nullopt, 0.0};
    if (tp + fp > 0) point.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (!pos_scores.empty())
      point.recall = static_cast<double>(tp) / static_cast<double>(pos_scores.size());
    out.push_back(point);
  }
  return out;
}

AccuracyReport accuracy_report(std::span<const ScoredSample> samples) {
  if (samples.empty()) throw Error(ErrorCode::NoData, "accuracy of an empty sample set");
  std::size_t correct = 0;
  for (const auto& s : samples) correct += ((s.score >= 0.5) == (s.label == 1)) ? 1 : 0;
  const ClassCounts c = count_classes(samples);
  const double total = static_cast<double>(samples.size());
  return {static_cast<double>(correct) / total,
          static_cast<double>(std::max(c.positives, c.negatives)) / total};
}

LabelHistogram probability_density_by_label(std::span<const ScoredSample> samples, int bins) {
  if (bins < 2) throw Error(ErrorCode::InvariantViolation, "density needs at least 2 bins");
  const auto nbins = static_cast<std::size_t>(bins);
  const double width = 1.0 / static_cast<double>(bins);

  LabelHistogram h;
  for (std::size_t i = 0; i <= nbins; ++i) h.edges.push_back(static_cast<double>(i) * width);
  h.positive.assign(nbins, 0.0);
  h.negative.assign(nbins, 0.0);

  for (const auto& s : samples) {
    auto bin = static_cast<std::size_t>(std::clamp(s.score, 0.0, 1.0) * bins);
    bin = std::min(bin, nbins - 1);
    (s.label == 1 ? h.positive : h.negative)[bin] += 1.0;
  }
  const ClassCounts c = count_classes(samples);
  h.positive_empty = c.positives == 0;
  h.negative_empty = c.negatives == 0;
  auto normalize = [&](std::vector<double>& v, std::size_t count) {
    if (count == 0) return;
    for (double& x : v) x /= static_cast<double>(count) * width;
  };
  normalize(h.positive, c.positives);
  normalize(h.negative, c.negatives);
  return h;
}

double density_mass_at_or_above(const LabelHistogram& h, bool positive, double threshold) {
  const auto& density = positive ? h.positive : h.negative;
  double mass = 0.0;
  for (std::size_t i = 0; i < density.size(); ++i)
    if (h.edges[i] >= threshold - 1e-12) mass += density[i] * (h.edges[i + 1] - h.edges[i]);
  return mass;
}

std::vector<double> default_thresholds(int steps) {
  std::vector<double> t;
  for (int i = 0; i <= steps; ++i) t.push_back(static_cast<double>(i) / steps);
  return t;
}

MetricReport build_report(std::span<const ScoredSample> samples, int density_bins) {
  MetricReport r;
  r.samples = samples.size();
  r.positives = count_classes(samples).positives;
  r.auc = auc(samples);
  r.roc_points = roc_curve(samples);
  const auto thresholds = default_thresholds();
  r.pr_points = precision_recall_sweep(samples, thresholds);
  const auto acc = accuracy_report(samples);
  r.accuracy_at_half = acc.accuracy_at_half;
  r.naive_accuracy = acc.naive_accuracy;
  const double half = 0.5;
  const auto at_half = precision_recall_sweep(samples, std::span<const double>(&half, 1));
  r.precision_at_half = at_half.front().precision;
  r.recall_at_half = at_half.front().recall;
  r.histogram_by_label = probability_density_by_label(samples, density_bins);
  return r;
}

SegmentEvaluation evaluate_by_segment(std::span<const ScoredSample> samples,
                                      std::size_t min_samples) {
  std::map<std::string, std::vector<ScoredSample>> groups;
  for (const auto& s : samples) groups[s.segment].push_back(s);

  SegmentEvaluation out;
  for (const auto& [segment, group] : groups) {
    if (group.size() < min_samples) {
      out.skipped[segment] = "only " + std::to_string(group.size()) + " samples (minimum " +
                             std::to_string(min_samples) + ")";
      continue;
    }
    const ClassCounts c = count_classes(group);
    if (c.positives == 0 || c.negatives == 0) {
      out.skipped[segment] = "single class";
      continue;
    }
    out.reports.emplace(segment, build_report(group));
  }
  return out;
}

void write_report_bundle(const ReportBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const MetricReport& r = bundle.overall;

  {
    auto out = open_csv(dir / "roc.csv");
    out << "fpr,tpr,threshold\n";
    for (const auto& p : r.roc_points)
      out << num(p.fpr) << ',' << num(p.tpr) << ',' << num(p.threshold) << '\n';
  }
  {
    auto out = open_csv(dir / "pr.csv");
    out << "threshold,precision,recall\n";
    for (const auto& p : r.pr_points)
      out << num(p.threshold) << ',' << (p.precision ? num(*p.precision) : "") << ','
          << num(p.recall) << '\n';
  }
  {
    auto out = open_csv(dir / "density.csv");
    out << "bin_lower,bin_upper,positive_density,negative_density\n";
    const auto& h = r.histogram_by_label;
    for (std::size_t i = 0; i + 1 < h.edges.size(); ++i)
      out << num(h.edges[i]) << ',' << num(h.edges[i + 1]) << ',' << num(h.positive[i]) << ','
          << num(h.negative[i]) << '\n';
  }
  {
    auto out = open_csv(dir / "odds_ratios.csv");
    out << "feature,odds_ratio,std_across_folds\n";
    for (const auto& o : bundle.odds)
      out << o.feature << ',' << num(o.odds_ratio) << ','
          << (o.std_across_folds ? num(*o.std_across_folds) : "") << '\n';
  }
  {
    auto out = open_csv(dir / "segments.csv");
    out << "segment,status,samples,positives,auc,accuracy_at_half,reason\n";
    for (const auto& [segment, rep] : bundle.segments.reports)
      out << segment << ",evaluated," << rep.samples << ',' << rep.positives << ','
          << num(rep.auc) << ',' << num(rep.accuracy_at_half) << ",\n";
    for (const auto& [segment, reason] : bundle.segments.skipped)
      out << segment << ",skipped,,,,," << reason << '\n';
  }

  nlohmann::json summary = {
      {"samples", r.samples},
      {"positives", r.positives},
      {"auc", r.auc},
      {"accuracy_at_half", r.accuracy_at_half},
      {"naive_accuracy", r.naive_accuracy},
      {"precision_at_half", optional_json(r.precision_at_half)},
      {"recall_at_half", r.recall_at_half},
      {"inset_threshold", bundle.inset_threshold},
      {"positive_mass_at_or_above_inset",
       density_mass_at_or_above(r.histogram_by_label, true, bundle.inset_threshold)},
      {"negative_mass_at_or_above_inset",
       density_mass_at_or_above(r.histogram_by_label, false, bundle.inset_threshold)},
      {"profile_only_auc", optional_json(bundle.profile_only_auc)},
  };
  for (const auto& [key, value] : bundle.extra_scalars) summary[key] = optional_json(value);
  std::ofstream out(dir / "summary.json", std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write summary.json");
  out << summary.dump(2) << '\n';
}

}  // namespace pingmatch
