#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "confact/errors.hpp"
#include "confact/extended_real.hpp"
#include "confact/loss_model.hpp"
#include "confact/records.hpp"

namespace confact {

inline constexpr const char* kAbstainMarker = "[ABSTAIN]";

struct FilteredResponse {
  std::string response_id;
  std::vector<ClaimRecord> retained;
  std::vector<ClaimRecord> removed;
  bool abstained = false;
  std::string merged_text;
};

struct CalibrationArtifact {
  ExtendedReal tau_hat;
  double alpha = 0.1;
  double lambda = 0.0;
  std::size_t n = 0;
  std::string score_field;
  std::string loss_spec_name;
  std::size_t quantile_rank = 0;
  std::string provenance;

  friend bool operator==(const CalibrationArtifact&, const CalibrationArtifact&) = default;
};

// Scores and losses of one response, aligned by claim index.
struct ScoredClaims {
  std::vector<double> scores;
  std::vector<Loss> losses;
};

inline void validate_lambda(double lambda) {
  if (std::isnan(lambda) || lambda < 0.0) {
    std::ostringstream os;
    os << "lambda must be a non-negative real (or inf), got " << lambda;
    throw ConfigError(os.str());
  }
}

inline ScoredClaims scored_claims(const ResponseRecord& response, const std::string& score_field,
                                  const LossSpec& spec) {
  ScoredClaims out;
  out.scores.reserve(response.claims.size());
  out.losses.reserve(response.claims.size());
  for (const auto& claim : response.claims) {
    out.scores.push_back(score_of(claim, score_field));
    out.losses.push_back(loss_of(claim, spec));
  }
  return out;
}

// Loss of the claims whose score is strictly above `tau`.
inline Loss retained_loss(std::span<const double> scores, std::span<const Loss> losses,
                          ExtendedReal tau) {
  Loss total = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (tau.below(scores[i])) total += losses[i];
  }
  return total;
}

/// Smallest threshold whose strict filter brings the retained loss within
/// `lambda`.
///
/// Retained loss is a right-continuous, non-increasing step function of the
/// threshold that only changes at claim scores, so the infimum is either
/// -inf (nothing needs removing) or one of the claim scores. Claims are
/// walked in ascending score order; each group of tied scores is removed
/// together.
inline ExtendedReal conformity_score(std::span<const double> scores, std::span<const Loss> losses,
                                     double lambda) {
  if (scores.size() != losses.size()) {
    throw DataError("scores and losses differ in length");
  }
  Loss remaining = response_loss(losses);
  if (static_cast<double>(remaining) <= lambda) return ExtendedReal::neg_inf();

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::size_t i = 0;
  while (i < order.size()) {
    const double level = scores[order[i]];
    while (i < order.size() && scores[order[i]] == level) {
      remaining -= losses[order[i]];
      ++i;
    }
    if (static_cast<double>(remaining) <= lambda) return ExtendedReal::finite(level);
  }
  // Unreachable for lambda >= 0: removing every claim leaves loss 0.
  throw DataError("no feasible threshold found");
}

inline ExtendedReal conformity_score(const ResponseRecord& response, double lambda,
                                     const std::string& score_field, const LossSpec& spec) {
  validate_lambda(lambda);
  const auto sc = scored_claims(response, score_field, spec);
  return conformity_score(sc.scores, sc.losses, lambda);
}

/// Rank k = ceil((n+1)(1-alpha)) of the conformal quantile, 1-based.
///
/// Requires alpha in (1/(n+1), 1). A relative slack of 1e-9 absorbs
/// binary rounding of decimal alphas, so that e.g. n=4, alpha=0.2 gives
/// k=4 rather than 5.
inline std::size_t quantile_rank(std::size_t n, double alpha) {
  if (n == 0) throw DataError("calibration set is empty");
  const double min_alpha = 1.0 / static_cast<double>(n + 1);
  const double x = static_cast<double>(n + 1) * (1.0 - alpha);
  const double k = std::ceil(x - 1e-9 * x);
  if (!(alpha > 0.0 && alpha < 1.0) || k > static_cast<double>(n)) {
    std::ostringstream os;
    os << "alpha=" << alpha << " is infeasible for n=" << n << " calibration points; alpha must lie in ["
       << min_alpha << ", 1)";
    throw ConfigError(os.str());
  }
  const auto rank = static_cast<std::size_t>(std::max(k, 1.0));
  return rank;
}

// k-th smallest conformity value with -inf below every real; ties kept.
inline ExtendedReal conformal_quantile(std::vector<ExtendedReal> values, std::size_t rank) {
  if (rank == 0 || rank > values.size()) throw ConfigError("quantile rank out of range");
  auto nth = values.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(values.begin(), nth, values.end());
  return *nth;
}

inline CalibrationArtifact calibrate(std::span<const ResponseRecord> calibration_set, double alpha,
                                     double lambda, const std::string& score_field,
                                     const LossSpec& spec, std::string provenance = {}) {
  validate_lambda(lambda);
  if (calibration_set.empty()) throw DataError("calibration set is empty");
  const std::size_t k = quantile_rank(calibration_set.size(), alpha);

  std::vector<ExtendedReal> values;
  values.reserve(calibration_set.size());
  for (const auto& r : calibration_set) {
    values.push_back(conformity_score(r, lambda, score_field, spec));
  }

  CalibrationArtifact a;
  a.tau_hat = conformal_quantile(std::move(values), k);
  a.alpha = alpha;
  a.lambda = lambda;
  a.n = calibration_set.size();
  a.score_field = score_field;
  a.loss_spec_name = spec.name();
  a.quantile_rank = k;
  a.provenance = std::move(provenance);
  return a;
}

namespace detail {

inline bool ends_with_punctuation(std::string_view s) {
  if (s.empty()) return false;
  const char c = s.back();
  return c == '.' || c == '!' || c == '?';
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace detail

// Deterministic stand-in for a model-driven merge: claim texts in order,
// each closed with a period unless already punctuated, joined by a space.
inline std::string merge_claims(std::span<const ClaimRecord> retained) {
  if (retained.empty()) return kAbstainMarker;
  std::string out;
  for (const auto& claim : retained) {
    const auto text = detail::trim(claim.text);
    if (!out.empty()) out += ' ';
    out += text;
    if (!detail::ends_with_punctuation(text)) out += '.';
  }
  return out;
}

inline FilteredResponse filter_claims(const ResponseRecord& response, ExtendedReal tau,
                                      const std::string& score_field) {
  FilteredResponse out;
  out.response_id = response.response_id;
  for (const auto& claim : response.claims) {
    if (tau.below(score_of(claim, score_field))) {
      out.retained.push_back(claim);
    } else {
      out.removed.push_back(claim);
    }
  }
  out.abstained = out.retained.empty();
  out.merged_text = merge_claims(out.retained);
  return out;
}

inline FilteredResponse apply(const CalibrationArtifact& artifact, const ResponseRecord& response) {
  return filter_claims(response, artifact.tau_hat, artifact.score_field);
}

inline Loss filtered_loss(const FilteredResponse& filtered, const LossSpec& spec) {
  Loss total = 0;
  for (const auto& claim : filtered.retained) total += loss_of(claim, spec);
  return total;
}

}  // namespace confact
