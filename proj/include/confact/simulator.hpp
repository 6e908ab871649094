#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "confact/calibration.hpp"
#include "confact/data_io.hpp"
#include "confact/errors.hpp"
#include "confact/extended_real.hpp"
#include "confact/loss_model.hpp"
#include "confact/parallel.hpp"
#include "confact/records.hpp"
#include "confact/report.hpp"

namespace confact {

/// Number of claims per synthetic response: a fixed count, a uniform range
/// [low, high], or a Poisson draw with the given mean conditioned on >= 1.
struct ClaimCountDist {
  enum class Kind { kFixed, kUniform, kPoisson };

  Kind kind = Kind::kFixed;
  std::size_t low = 5;
  std::size_t high = 5;
  double mean = 5.0;

  static ClaimCountDist fixed(std::size_t k) { return {Kind::kFixed, k, k, static_cast<double>(k)}; }
  static ClaimCountDist uniform(std::size_t lo, std::size_t hi) {
    return {Kind::kUniform, lo, hi, 0.5 * static_cast<double>(lo + hi)};
  }
  static ClaimCountDist poisson(double mean) { return {Kind::kPoisson, 1, 1, mean}; }

  // "5", "3..7" or "poisson:4.5".
  static ClaimCountDist parse(const std::string& text) {
    try {
      if (text.rfind("poisson:", 0) == 0) return poisson(std::stod(text.substr(8)));
      const auto dots = text.find("..");
      if (dots != std::string::npos) {
        return uniform(std::stoul(text.substr(0, dots)), std::stoul(text.substr(dots + 2)));
      }
      std::size_t used = 0;
      const auto k = std::stoul(text, &used);
      if (used != text.size()) throw ConfigError("");
      return fixed(k);
    } catch (const std::exception&) {
      throw ConfigError("claim count '" + text + "' must look like 5, 3..7 or poisson:4.5");
    }
  }

  std::string to_string() const {
    switch (kind) {
      case Kind::kUniform:
        return std::to_string(low) + ".." + std::to_string(high);
      case Kind::kPoisson:
        return "poisson:" + format_double(mean);
      case Kind::kFixed:
        break;
    }
    return std::to_string(low);
  }
};

struct Gaussian {
  double mean = 0.0;
  double sd = 1.0;
};

struct GeneratorConfig {
  std::size_t n_responses = 500;
  ClaimCountDist claims = ClaimCountDist::uniform(3, 7);
  double error_prob = 0.3;
  // Relative frequency per error type; empty means uniform over the loss spec types.
  std::vector<std::pair<std::string, double>> error_type_weights;
  Gaussian correct_score{0.6, 1.0};
  Gaussian erroneous_score{-0.6, 1.0};
  // When positive, scores are rounded to multiples of this step (forces ties).
  double score_quantum = 0.0;
  std::string score_field = "score";
  std::uint64_t seed = 0;
};

inline void validate_config(const GeneratorConfig& config, const LossSpec& spec) {
  auto fail = [](const std::string& msg) { throw ConfigError("generator config: " + msg); };
  if (!(config.correct_score.sd > 0.0) || !(config.erroneous_score.sd > 0.0)) {
    fail("score standard deviations must be positive");
  }
  if (!std::isfinite(config.correct_score.mean) || !std::isfinite(config.erroneous_score.mean)) {
    fail("score means must be finite");
  }
  if (!(config.error_prob >= 0.0 && config.error_prob <= 1.0)) fail("error_prob must lie in [0, 1]");
  if (config.score_quantum < 0.0) fail("score_quantum must be non-negative");
  if (config.score_field.empty()) fail("score_field must not be empty");
  switch (config.claims.kind) {
    case ClaimCountDist::Kind::kUniform:
      if (config.claims.low > config.claims.high) fail("claim count range is empty");
      break;
    case ClaimCountDist::Kind::kPoisson:
      if (!(config.claims.mean > 0.0)) fail("Poisson claim count mean must be positive");
      break;
    case ClaimCountDist::Kind::kFixed:
      break;
  }
  double total = 0.0;
  for (const auto& [type, w] : config.error_type_weights) {
    if (!spec.contains(type)) fail("error type '" + type + "' is not in loss spec '" + spec.name() + "'");
    if (!(w >= 0.0) || !std::isfinite(w)) fail("error type weights must be non-negative");
    total += w;
  }
  if (!config.error_type_weights.empty() && !(total > 0.0)) fail("error type weights sum to zero");
}

/// IID synthetic responses, hence exchangeable. Each claim is erroneous with
/// probability error_prob and then carries exactly one error type; its score
/// is drawn from the class-conditional Gaussian. Response i uses its own
/// seeded stream, so a dataset's prefix does not depend on its length.
inline std::vector<ResponseRecord> generate(const GeneratorConfig& config, const LossSpec& spec) {
  validate_config(config, spec);

  std::vector<std::string> types;
  std::vector<double> weights;
  if (config.error_type_weights.empty()) {
    for (const auto& w : spec.weights()) {
      types.push_back(w.error_type);
      weights.push_back(1.0);
    }
  } else {
    for (const auto& [t, w] : config.error_type_weights) {
      types.push_back(t);
      weights.push_back(w);
    }
  }

  std::vector<ResponseRecord> out(config.n_responses);
  for (std::size_t i = 0; i < config.n_responses; ++i) {
    std::mt19937_64 rng(derive_seed(config.seed, i));
    std::size_t count = config.claims.low;
    if (config.claims.kind == ClaimCountDist::Kind::kUniform) {
      count = std::uniform_int_distribution<std::size_t>(config.claims.low, config.claims.high)(rng);
    } else if (config.claims.kind == ClaimCountDist::Kind::kPoisson) {
      std::poisson_distribution<std::size_t> poisson(config.claims.mean);
      do {
        count = poisson(rng);
      } while (count == 0);
    }

    std::bernoulli_distribution is_error(config.error_prob);
    std::discrete_distribution<std::size_t> pick_type(weights.begin(), weights.end());
    std::normal_distribution<double> correct(config.correct_score.mean, config.correct_score.sd);
    std::normal_distribution<double> erroneous(config.erroneous_score.mean, config.erroneous_score.sd);

    auto& r = out[i];
    r.response_id = "sim-" + std::to_string(i);
    r.image_ref = "synthetic";
    r.prompt = "Describe the image.";
    r.claims.reserve(count);
    for (std::size_t j = 0; j < count; ++j) {
      ClaimRecord c;
      c.claim_id = r.response_id + "." + std::to_string(j);
      c.text = "Synthetic claim " + std::to_string(j);
      ClaimAnnotation a;
      double score = 0.0;
      if (is_error(rng)) {
        a.error_types.push_back(types[pick_type(rng)]);
        score = erroneous(rng);
      } else {
        score = correct(rng);
      }
      if (config.score_quantum > 0.0) {
        score = std::round(score / config.score_quantum) * config.score_quantum;
      }
      c.scores[config.score_field] = score;
      c.annotation = std::move(a);
      r.claims.push_back(std::move(c));
    }
  }
  return out;
}

/// Exhaustive conformity oracle: tries every threshold in {-inf} and the
/// claim scores, evaluating the strict filter from scratch each time, and
/// returns the smallest feasible one. Limited to 20 claims.
inline ExtendedReal brute_force_conformity(const ResponseRecord& response, double lambda,
                                           const std::string& score_field, const LossSpec& spec) {
  if (response.claims.size() > 20) {
    throw ConfigError("brute-force conformity is limited to 20 claims");
  }
  std::vector<ExtendedReal> candidates{ExtendedReal::neg_inf()};
  for (const auto& c : response.claims) candidates.push_back(ExtendedReal::finite(score_of(c, score_field)));

  std::optional<ExtendedReal> best;
  for (const auto& tau : candidates) {
    Loss loss = 0;
    for (const auto& c : response.claims) {
      if (score_of(c, score_field) > tau.value()) loss += loss_of(c, spec);
    }
    if (static_cast<double>(loss) > lambda) continue;
    if (!best || tau < *best) best = tau;
  }
  return *best;
}

struct TheoremCheckResult {
  double alpha = 0.0;
  double lambda = 0.0;
  std::size_t n_calib = 0;
  std::size_t n_test = 0;
  std::size_t n_trials = 0;
  double mean_coverage = 0.0;
  double std_error = 0.0;
  double lower_bound = 0.0;
  double upper_bound = 0.0;
  double z = 4.0;
  bool lower_ok = false;
  bool upper_ok = false;
  bool pass = false;
};

/// Monte Carlo check of the coverage sandwich
///   1 - alpha <= P(loss of filtered test response <= lambda) <= 1 - alpha + 1/(n+1).
///
/// Each trial draws fresh calibration and test data, so coverage is
/// marginal over both. pass requires the mean coverage to fall within
/// z standard errors of the band.
inline TheoremCheckResult verify_theorem(const GeneratorConfig& config, double alpha, double lambda,
                                         std::size_t n_calib, std::size_t n_test,
                                         std::size_t n_trials, const LossSpec& spec,
                                         double z = 4.0, unsigned threads = 1) {
  validate_lambda(lambda);
  const std::size_t k = quantile_rank(n_calib, alpha);
  if (n_trials < 100) throw ConfigError("theorem check needs at least 100 trials");
  if (n_test == 0) throw ConfigError("theorem check needs at least one test response");
  validate_config(config, spec);

  std::vector<double> coverage(n_trials);
  parallel_for(n_trials, threads, [&](std::size_t t) {
    GeneratorConfig cfg = config;
    cfg.seed = derive_seed(config.seed, t);
    cfg.n_responses = n_calib + n_test;
    const auto records = generate(cfg, spec);

    std::vector<ExtendedReal> values;
    values.reserve(n_calib);
    for (std::size_t i = 0; i < n_calib; ++i) {
      const auto sc = scored_claims(records[i], cfg.score_field, spec);
      values.push_back(conformity_score(sc.scores, sc.losses, lambda));
    }
    const ExtendedReal tau = conformal_quantile(std::move(values), k);

    std::size_t covered = 0;
    for (std::size_t i = n_calib; i < records.size(); ++i) {
      const auto sc = scored_claims(records[i], cfg.score_field, spec);
      if (static_cast<double>(retained_loss(sc.scores, sc.losses, tau)) <= lambda) ++covered;
    }
    coverage[t] = static_cast<double>(covered) / static_cast<double>(n_test);
  });

  const auto me = mean_and_error(coverage);
  TheoremCheckResult r;
  r.alpha = alpha;
  r.lambda = lambda;
  r.n_calib = n_calib;
  r.n_test = n_test;
  r.n_trials = n_trials;
  r.mean_coverage = me.mean;
  r.std_error = me.std_error;
  r.lower_bound = 1.0 - alpha;
  r.upper_bound = 1.0 - alpha + 1.0 / static_cast<double>(n_calib + 1);
  r.z = z;
  r.lower_ok = r.mean_coverage >= r.lower_bound - z * r.std_error;
  r.upper_ok = r.mean_coverage <= r.upper_bound + z * r.std_error;
  r.pass = r.lower_ok && r.upper_ok;
  return r;
}

inline json theorem_result_to_json(const TheoremCheckResult& r) {
  json j;
  j["alpha"] = r.alpha;
  j["lambda"] = extended_to_json(r.lambda);
  j["n_calib"] = r.n_calib;
  j["n_test"] = r.n_test;
  j["n_trials"] = r.n_trials;
  j["mean_coverage"] = r.mean_coverage;
  j["std_error"] = r.std_error;
  j["lower_bound"] = r.lower_bound;
  j["upper_bound"] = r.upper_bound;
  j["z"] = r.z;
  j["lower_ok"] = r.lower_ok;
  j["upper_ok"] = r.upper_ok;
  j["pass"] = r.pass;
  return j;
}

/// Reads a generator config object. Every key is optional:
///   n_responses, claims ("3..7"), error_prob, error_type_weights {type: w},
///   correct_score {mean, sd}, erroneous_score {mean, sd}, score_quantum,
///   score_field, seed.
inline GeneratorConfig generator_config_from_json(const nlohmann::ordered_json& j) {
  GeneratorConfig c;
  try {
    if (!j.is_object()) throw ConfigError("generator config must be a JSON object");
    if (j.contains("n_responses")) c.n_responses = j["n_responses"].get<std::size_t>();
    if (j.contains("claims")) {
      c.claims = ClaimCountDist::parse(j["claims"].is_string() ? j["claims"].get<std::string>()
                                                              : j["claims"].dump());
    }
    if (j.contains("error_prob")) c.error_prob = j["error_prob"].get<double>();
    if (j.contains("error_type_weights")) {
      for (const auto& [t, w] : j["error_type_weights"].items()) c.error_type_weights.emplace_back(t, w.get<double>());
    }
    auto gaussian = [&](const char* key, Gaussian& g) {
      if (!j.contains(key)) return;
      g.mean = j[key].at("mean").get<double>();
      g.sd = j[key].at("sd").get<double>();
    };
    gaussian("correct_score", c.correct_score);
    gaussian("erroneous_score", c.erroneous_score);
    if (j.contains("score_quantum")) c.score_quantum = j["score_quantum"].get<double>();
    if (j.contains("score_field")) c.score_field = j["score_field"].get<std::string>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::ordered_json::exception& e) {
    throw ConfigError(std::string("generator config: ") + e.what());
  }
  return c;
}

}  // namespace confact
