#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "confact/calibration.hpp"
#include "confact/errors.hpp"
#include "confact/loss_model.hpp"
#include "confact/parallel.hpp"
#include "confact/records.hpp"
#include "confact/report.hpp"

namespace confact {

enum class Baseline { kNone, kRandom, kVanilla };

inline Baseline parse_baseline(const std::string& name) {
  if (name == "none") return Baseline::kNone;
  if (name == "random") return Baseline::kRandom;
  if (name == "vanilla") return Baseline::kVanilla;
  throw ConfigError("unknown baseline '" + name + "' (expected none, random or vanilla)");
}

inline std::string to_string(Baseline b) {
  switch (b) {
    case Baseline::kRandom:
      return "random";
    case Baseline::kVanilla:
      return "vanilla";
    case Baseline::kNone:
      break;
  }
  return "none";
}

struct ExperimentOptions {
  Baseline baseline = Baseline::kNone;
  unsigned threads = 1;
};

struct ClaimMetrics {
  double tpr = 0.0;
  double fnr = 1.0;
  double precision = 0.0;
  double f1 = 0.0;
};

// Drops each claim independently with probability alpha.
inline FilteredResponse random_filter_baseline(const ResponseRecord& response, double alpha,
                                               std::uint64_t seed) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("random filtering probability must lie in [0, 1]");
  }
  std::mt19937_64 rng(seed);
  FilteredResponse out;
  out.response_id = response.response_id;
  for (const auto& claim : response.claims) {
    const double u = std::generate_canonical<double, 53>(rng);
    if (u < alpha) {
      out.removed.push_back(claim);
    } else {
      out.retained.push_back(claim);
    }
  }
  out.abstained = out.retained.empty();
  out.merged_text = merge_claims(out.retained);
  return out;
}

/// Claim-level detection metrics. A positive is a claim with loss > 0; a
/// predicted positive is a removed claim. With no erroneous claims TPR is
/// 0; with nothing removed precision is 0; F1 is 0 when precision and TPR
/// are both 0. FNR is always 1 - TPR.
inline ClaimMetrics evaluate_claim_metrics(std::span<const ResponseRecord> test_responses,
                                           std::span<const FilteredResponse> filtered,
                                           const LossSpec& spec) {
  if (test_responses.size() != filtered.size()) {
    throw DataError("test responses and filtered responses differ in count");
  }
  std::size_t erroneous = 0;
  std::size_t removed = 0;
  std::size_t removed_erroneous = 0;
  for (std::size_t i = 0; i < test_responses.size(); ++i) {
    for (const auto& c : test_responses[i].claims) {
      if (loss_of(c, spec) > 0) ++erroneous;
    }
    for (const auto& c : filtered[i].removed) {
      ++removed;
      if (loss_of(c, spec) > 0) ++removed_erroneous;
    }
  }
  ClaimMetrics m;
  if (erroneous > 0) m.tpr = static_cast<double>(removed_erroneous) / static_cast<double>(erroneous);
  m.fnr = 1.0 - m.tpr;
  if (removed > 0) m.precision = static_cast<double>(removed_erroneous) / static_cast<double>(removed);
  if (m.precision + m.tpr > 0.0) m.f1 = 2.0 * m.precision * m.tpr / (m.precision + m.tpr);
  return m;
}

/// Response-level and claim-level metrics of one test split.
///
/// filter_ratio averages the removed fraction over responses that have
/// claims; abstention_rate is the fraction of those responses left with
/// nothing. error_rate counts any residual loss, independent of lambda.
inline SplitMetrics split_metrics(std::span<const ResponseRecord> test_responses,
                                  std::span<const FilteredResponse> filtered, double lambda,
                                  const LossSpec& spec) {
  SplitMetrics m;
  const auto n = static_cast<double>(test_responses.size());
  if (test_responses.empty()) return m;
  std::size_t covered = 0;
  std::size_t with_loss = 0;
  std::size_t nonempty = 0;
  std::size_t abstained = 0;
  double ratio_sum = 0.0;
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < test_responses.size(); ++i) {
    const Loss loss = filtered_loss(filtered[i], spec);
    if (static_cast<double>(loss) <= lambda) ++covered;
    if (loss > 0) ++with_loss;
    loss_sum += static_cast<double>(loss);
    const auto total = test_responses[i].claims.size();
    if (total == 0) continue;
    ++nonempty;
    if (filtered[i].abstained) ++abstained;
    ratio_sum += static_cast<double>(filtered[i].removed.size()) / static_cast<double>(total);
  }
  m.empirical_coverage = static_cast<double>(covered) / n;
  m.error_rate = static_cast<double>(with_loss) / n;
  m.avg_loss = loss_sum / n;
  if (nonempty > 0) {
    m.filter_ratio = ratio_sum / static_cast<double>(nonempty);
    m.abstention_rate = static_cast<double>(abstained) / static_cast<double>(nonempty);
  }
  const auto claims = evaluate_claim_metrics(test_responses, filtered, spec);
  m.tpr = claims.tpr;
  m.fnr = claims.fnr;
  m.f1 = claims.f1;
  return m;
}

// Calibration and test indices of one split: a seeded shuffle of the whole
// dataset, first n_calib for calibration, next n_test for testing.
inline std::vector<std::size_t> split_indices(std::size_t dataset_size, std::uint64_t seed) {
  std::vector<std::size_t> idx(dataset_size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

inline void check_split_plan(const SplitPlan& plan, std::size_t dataset_size) {
  if (plan.n_splits == 0) throw ConfigError("number of splits must be at least 1");
  if (plan.n_calib == 0) throw ConfigError("calibration size must be at least 1");
  if (plan.n_calib + plan.n_test > dataset_size) {
    throw DataError("split needs at least " + std::to_string(plan.n_calib + plan.n_test) +
                    " records (n_calib=" + std::to_string(plan.n_calib) +
                    " + n_test=" + std::to_string(plan.n_test) + "), dataset has " +
                    std::to_string(dataset_size));
  }
}

inline EvaluationReport run_split_experiment(std::span<const ResponseRecord> records,
                                             const SplitPlan& plan, double alpha, double lambda,
                                             const std::string& score_field, const LossSpec& spec,
                                             const ExperimentOptions& options = {}) {
  validate_lambda(lambda);
  check_split_plan(plan, records.size());
  if (options.baseline == Baseline::kNone) {
    quantile_rank(plan.n_calib, alpha);
  } else if (options.baseline == Baseline::kRandom && !(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("random filtering probability must lie in [0, 1]");
  }

  EvaluationReport report;
  report.alpha = alpha;
  report.lambda = lambda;
  report.score_field = score_field;
  report.loss_spec_name = spec.name();
  report.baseline = to_string(options.baseline);
  report.plan = plan;
  report.splits.resize(plan.n_splits);

  parallel_for(plan.n_splits, options.threads, [&](std::size_t s) {
    const std::uint64_t split_seed = derive_seed(plan.seed, s);
    const auto idx = split_indices(records.size(), split_seed);

    std::vector<ResponseRecord> test;
    test.reserve(plan.n_test);
    for (std::size_t i = 0; i < plan.n_test; ++i) test.push_back(records[idx[plan.n_calib + i]]);

    ExtendedReal tau = ExtendedReal::neg_inf();
    if (options.baseline == Baseline::kNone && !std::isinf(lambda)) {
      std::vector<ResponseRecord> calib;
      calib.reserve(plan.n_calib);
      for (std::size_t i = 0; i < plan.n_calib; ++i) calib.push_back(records[idx[i]]);
      tau = calibrate(calib, alpha, lambda, score_field, spec).tau_hat;
    }

    std::vector<FilteredResponse> filtered;
    filtered.reserve(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
      if (options.baseline == Baseline::kRandom) {
        filtered.push_back(random_filter_baseline(test[i], alpha, derive_seed(split_seed, i)));
      } else {
        filtered.push_back(filter_claims(test[i], tau, score_field));
      }
    }
    report.splits[s] = split_metrics(test, filtered, lambda, spec);
  });

  summarize(report);
  return report;
}

/// Cross product of alphas x lambdas x score fields. Each combination
/// contributes one row per split followed by "mean" and "se" rows. Alphas
/// that are infeasible for the calibration size are skipped with a warning.
inline SweepReport sweep(std::span<const ResponseRecord> records, const SplitPlan& plan,
                         std::span<const double> alphas, std::span<const double> lambdas,
                         std::span<const std::string> score_fields, const LossSpec& spec,
                         const ExperimentOptions& options = {}) {
  if (alphas.empty() || lambdas.empty() || score_fields.empty()) {
    throw ConfigError("sweep grids must be non-empty");
  }
  SweepReport out;
  for (const auto& field : score_fields) {
    for (double alpha : alphas) {
      try {
        quantile_rank(plan.n_calib, alpha);
      } catch (const ConfigError& e) {
        out.warnings.push_back(std::string("skipped alpha: ") + e.what());
        continue;
      }
      for (double lambda : lambdas) {
        const auto report = run_split_experiment(records, plan, alpha, lambda, field, spec, options);
        auto row = [&](std::string index, const SplitMetrics& m) {
          out.rows.push_back({alpha, lambda, std::move(index), m, plan.n_calib, field});
        };
        for (std::size_t s = 0; s < report.splits.size(); ++s) row(std::to_string(s), report.splits[s]);
        row("mean", report.mean);
        row("se", report.std_error);
      }
    }
  }
  return out;
}

// Repeated random splits per calibration size; the CI is mean +/- 1.96 SE.
inline std::vector<CalibrationSizePoint> calibration_size_study(
    std::span<const ResponseRecord> records, std::span<const std::size_t> sizes,
    std::size_t repeats, std::size_t n_test, double alpha, double lambda,
    const std::string& score_field, const LossSpec& spec, std::uint64_t seed,
    const ExperimentOptions& options = {}) {
  if (sizes.empty()) throw ConfigError("calibration size list must be non-empty");
  const auto largest = *std::max_element(sizes.begin(), sizes.end());
  check_split_plan({largest, n_test, std::max<std::size_t>(repeats, 1), seed}, records.size());

  std::vector<CalibrationSizePoint> points;
  for (std::size_t size : sizes) {
    const SplitPlan plan{size, n_test, repeats, seed};
    const auto report = run_split_experiment(records, plan, alpha, lambda, score_field, spec, options);
    CalibrationSizePoint p;
    p.n_calib = size;
    p.repeats = repeats;
    p.mean_coverage = report.mean.empirical_coverage;
    p.std_error = report.std_error.empirical_coverage;
    p.ci_low = p.mean_coverage - 1.96 * p.std_error;
    p.ci_high = p.mean_coverage + 1.96 * p.std_error;
    p.filter_ratio = report.mean.filter_ratio;
    p.lower_bound = 1.0 - alpha;
    p.upper_bound = 1.0 - alpha + 1.0 / static_cast<double>(size + 1);
    points.push_back(p);
  }
  return points;
}

}  // namespace confact
