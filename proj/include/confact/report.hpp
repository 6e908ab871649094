#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace confact {

struct SplitPlan {
  std::size_t n_calib = 400;
  std::size_t n_test = 100;
  std::size_t n_splits = 50;
  std::uint64_t seed = 0;

  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

// Metrics of one calibration/test split, or their mean / standard error.
struct SplitMetrics {
  double empirical_coverage = 0.0;
  double filter_ratio = 0.0;
  double abstention_rate = 0.0;
  double tpr = 0.0;
  double fnr = 0.0;
  double f1 = 0.0;
  double error_rate = 0.0;
  double avg_loss = 0.0;

  friend bool operator==(const SplitMetrics&, const SplitMetrics&) = default;
};

struct MetricField {
  const char* name;
  double SplitMetrics::*member;
};

// Column order of every report format.
inline constexpr std::array<MetricField, 8> kMetricFields{{
    {"empirical_coverage", &SplitMetrics::empirical_coverage},
    {"filter_ratio", &SplitMetrics::filter_ratio},
    {"abstention_rate", &SplitMetrics::abstention_rate},
    {"tpr", &SplitMetrics::tpr},
    {"fnr", &SplitMetrics::fnr},
    {"f1", &SplitMetrics::f1},
    {"error_rate", &SplitMetrics::error_rate},
    {"avg_loss", &SplitMetrics::avg_loss},
}};

struct MeanAndError {
  double mean = 0.0;
  double std_error = 0.0;
};

// Sample mean and standard error of the mean (n-1 denominator); the
// standard error of a single observation is reported as 0.
inline MeanAndError mean_and_error(std::span<const double> xs) {
  MeanAndError out;
  if (xs.empty()) return out;
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  const double var = ss / static_cast<double>(xs.size() - 1);
  out.std_error = std::sqrt(var / static_cast<double>(xs.size()));
  return out;
}

struct EvaluationReport {
  double alpha = 0.0;
  double lambda = 0.0;
  std::string score_field;
  std::string loss_spec_name;
  std::string baseline = "none";
  SplitPlan plan;
  std::vector<SplitMetrics> splits;
  SplitMetrics mean;
  SplitMetrics std_error;

  friend bool operator==(const EvaluationReport&, const EvaluationReport&) = default;
};

inline void summarize(EvaluationReport& report) {
  std::vector<double> column(report.splits.size());
  for (const auto& field : kMetricFields) {
    for (std::size_t i = 0; i < report.splits.size(); ++i) column[i] = report.splits[i].*field.member;
    const auto me = mean_and_error(column);
    report.mean.*field.member = me.mean;
    report.std_error.*field.member = me.std_error;
  }
}

// One CSV row of a sweep. split_index is a split number, "mean" or "se".
struct SweepRow {
  double alpha = 0.0;
  double lambda = 0.0;
  std::string split_index;
  SplitMetrics metrics;
  std::size_t n_calib = 0;
  std::string score_field;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::vector<std::string> warnings;
};

struct CalibrationSizePoint {
  std::size_t n_calib = 0;
  std::size_t repeats = 0;
  double mean_coverage = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double filter_ratio = 0.0;
  double lower_bound = 0.0;
  double upper_bound = 0.0;

  friend bool operator==(const CalibrationSizePoint&, const CalibrationSizePoint&) = default;
};

}  // namespace confact
