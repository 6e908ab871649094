// confact: calibrate, apply and evaluate conformal claim filtering.
//
// Exit codes: 0 success, 2 configuration error, 3 data error.

#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "confact/confact.hpp"

namespace {

using namespace confact;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

double parse_lambda(const std::string& text) {
  double x = 0.0;
  try {
    x = parse_double(text);
  } catch (const DataError&) {
    throw ConfigError("lambda '" + text + "' is not a number");
  }
  validate_lambda(x);
  return x;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) throw ConfigError("empty list '" + text + "'");
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& s : split_list(text)) {
    try {
      out.push_back(parse_double(s));
    } catch (const DataError&) {
      throw ConfigError("'" + s + "' is not a number");
    }
  }
  return out;
}

std::vector<ResponseRecord> load_checked(const std::string& path, const LossSpec& spec) {
  std::vector<std::string> warnings;
  auto records = load_records(path, &spec, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  return records;
}

struct GeneratorFlags {
  std::string config_path;
  std::size_t n_responses = 0;
  std::string claims;
  double error_prob = 0.0;
  double score_sep = 0.0;
  double sd = 0.0;
  double quantum = 0.0;
  std::string score_field;
  CLI::Option* n_responses_opt = nullptr;
  CLI::Option* claims_opt = nullptr;
  CLI::Option* error_prob_opt = nullptr;
  CLI::Option* score_sep_opt = nullptr;
  CLI::Option* sd_opt = nullptr;
  CLI::Option* quantum_opt = nullptr;
  CLI::Option* score_field_opt = nullptr;

  void add_to(CLI::App& app) {
    app.add_option("--config", config_path, "Generator config JSON file");
    n_responses_opt = app.add_option("--n-responses", n_responses, "Responses to generate");
    claims_opt = app.add_option("--claims", claims, "Claims per response: 5, 3..7 or poisson:4.5");
    error_prob_opt = app.add_option("--error-prob", error_prob, "Per-claim error probability");
    score_sep_opt = app.add_option("--score-sep", score_sep,
                                   "Correct scores ~ N(+sep, sd), erroneous ~ N(-sep, sd)");
    sd_opt = app.add_option("--sd", sd, "Score standard deviation for both classes");
    quantum_opt = app.add_option("--score-quantum", quantum, "Round scores to this step (0 = off)");
    score_field_opt = app.add_option("--score-field", score_field, "Score field name");
  }

  GeneratorConfig build(std::uint64_t seed) const {
    GeneratorConfig c;
    if (!config_path.empty()) {
      std::string text;
      try {
        text = read_file(config_path);
      } catch (const DataError& e) {
        throw ConfigError(e.what());
      }
      auto j = nlohmann::ordered_json::parse(text, nullptr, false);
      if (j.is_discarded()) throw ConfigError("generator config '" + config_path + "' is not valid JSON");
      c = generator_config_from_json(j);
    }
    if (*n_responses_opt) c.n_responses = n_responses;
    if (*claims_opt) c.claims = ClaimCountDist::parse(claims);
    if (*error_prob_opt) c.error_prob = error_prob;
    if (*score_sep_opt) {
      c.correct_score.mean = score_sep;
      c.erroneous_score.mean = -score_sep;
    }
    if (*sd_opt) {
      c.correct_score.sd = sd;
      c.erroneous_score.sd = sd;
    }
    if (*quantum_opt) c.score_quantum = quantum;
    if (*score_field_opt) c.score_field = score_field;
    c.seed = seed;
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conformal claim filtering with factuality guarantees"};
  app.require_subcommand(1);

  std::string records_path;
  std::string loss_spec_name = "scene";
  std::string score_field;
  double alpha = 0.1;
  std::string lambda_text = "0";
  std::uint64_t seed = 0;
  unsigned threads = 1;
  SplitPlan plan;

  // calibrate
  std::string out_artifact;
  auto* calibrate_cmd = app.add_subcommand("calibrate", "Calibrate a filtering threshold");
  calibrate_cmd->add_option("--records", records_path, "Calibration records (JSON-Lines)")->required();
  calibrate_cmd->add_option("--alpha", alpha, "Target error rate")->required();
  calibrate_cmd->add_option("--lambda", lambda_text, "Loss tolerance (number or inf)")->required();
  calibrate_cmd->add_option("--score-field", score_field, "Claim score field")->required();
  calibrate_cmd->add_option("--loss-spec", loss_spec_name, "Preset name or loss spec file");
  calibrate_cmd->add_option("--out-artifact", out_artifact, "Output artifact JSON")->required();

  // filter
  std::string artifact_path;
  std::string out_path;
  auto* filter_cmd = app.add_subcommand("filter", "Apply a calibrated artifact to records");
  filter_cmd->add_option("--records", records_path, "Records to filter (JSON-Lines)")->required();
  filter_cmd->add_option("--artifact", artifact_path, "Calibration artifact JSON")->required();
  filter_cmd->add_option("--out", out_path, "Filtered responses (JSON-Lines)")->required();

  // evaluate
  std::string baseline_name = "none";
  std::string out_report;
  auto add_split_flags = [&](CLI::App* cmd) {
    cmd->add_option("--splits", plan.n_splits, "Number of random splits");
    cmd->add_option("--calib-size", plan.n_calib, "Calibration responses per split");
    cmd->add_option("--test-size", plan.n_test, "Test responses per split");
    cmd->add_option("--seed", seed, "Master random seed");
    cmd->add_option("--threads", threads, "Worker threads (0 = all cores)");
    cmd->add_option("--loss-spec", loss_spec_name, "Preset name or loss spec file");
  };
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Random-split evaluation of the filter");
  evaluate_cmd->add_option("--records", records_path, "Annotated records (JSON-Lines)")->required();
  evaluate_cmd->add_option("--alpha", alpha, "Target error rate")->required();
  evaluate_cmd->add_option("--lambda", lambda_text, "Loss tolerance (number or inf)")->required();
  evaluate_cmd->add_option("--score-field", score_field, "Claim score field")->required();
  evaluate_cmd->add_option("--baseline", baseline_name, "none, random or vanilla");
  evaluate_cmd->add_option("--out-report", out_report, "Output report JSON")->required();
  add_split_flags(evaluate_cmd);

  // sweep
  std::string alphas_text;
  std::string lambdas_text;
  std::string fields_text;
  std::string out_csv;
  auto* sweep_cmd = app.add_subcommand("sweep", "Grid over alpha, lambda and score fields");
  sweep_cmd->add_option("--records", records_path, "Annotated records (JSON-Lines)")->required();
  sweep_cmd->add_option("--alphas", alphas_text, "Comma-separated alphas")->required();
  sweep_cmd->add_option("--lambdas", lambdas_text, "Comma-separated lambdas (inf allowed)")->required();
  sweep_cmd->add_option("--score-fields", fields_text, "Comma-separated score fields")->required();
  sweep_cmd->add_option("--out-csv", out_csv, "Output CSV")->required();
  add_split_flags(sweep_cmd);

  // calib-study
  std::string sizes_text = "50,100,200,400";
  std::size_t repeats = 200;
  auto* study_cmd = app.add_subcommand("calib-study", "Coverage versus calibration set size");
  study_cmd->add_option("--records", records_path, "Annotated records (JSON-Lines)")->required();
  study_cmd->add_option("--sizes", sizes_text, "Comma-separated calibration sizes");
  study_cmd->add_option("--repeats", repeats, "Random splits per size");
  study_cmd->add_option("--alpha", alpha, "Target error rate");
  study_cmd->add_option("--lambda", lambda_text, "Loss tolerance (number or inf)");
  study_cmd->add_option("--score-field", score_field, "Claim score field")->required();
  study_cmd->add_option("--out-csv", out_csv, "Output CSV")->required();
  add_split_flags(study_cmd);

  // simulate [gen]
  GeneratorFlags gen_flags;
  std::size_t n_calib = 400;
  std::size_t n_test = 100;
  std::size_t trials = 1000;
  double z = 4.0;
  auto* simulate_cmd = app.add_subcommand("simulate", "Monte Carlo check of the coverage bounds");
  simulate_cmd->require_subcommand(0, 1);
  gen_flags.add_to(*simulate_cmd);
  simulate_cmd->add_option("--loss-spec", loss_spec_name, "Preset name or loss spec file");
  simulate_cmd->add_option("--alpha", alpha, "Target error rate");
  simulate_cmd->add_option("--lambda", lambda_text, "Loss tolerance (number or inf)");
  simulate_cmd->add_option("--n-calib", n_calib, "Calibration responses per trial");
  simulate_cmd->add_option("--n-test", n_test, "Test responses per trial");
  simulate_cmd->add_option("--trials", trials, "Number of trials");
  simulate_cmd->add_option("--z", z, "Standard errors of slack around the bounds");
  simulate_cmd->add_option("--seed", seed, "Master random seed");
  simulate_cmd->add_option("--threads", threads, "Worker threads (0 = all cores)");
  simulate_cmd->add_option("--out-report", out_report, "Output report JSON");
  auto* gen_cmd = simulate_cmd->add_subcommand("gen", "Write a synthetic record file");
  gen_cmd->add_option("--out", out_path, "Output records (JSON-Lines)")->required();
  gen_cmd->fallthrough();
  simulate_cmd->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    const LossSpec spec = resolve_loss_spec(loss_spec_name);

    if (*calibrate_cmd) {
      const double lambda = parse_lambda(lambda_text);
      const auto records = load_checked(records_path, spec);
      const auto artifact =
          calibrate(records, alpha, lambda, score_field, spec, "records=" + records_path);
      save_artifact(artifact, out_artifact);
      std::cout << "tau_hat=" << format_double(artifact.tau_hat.value()) << " k=" << artifact.quantile_rank
                << " n=" << artifact.n << "\n";
    } else if (*filter_cmd) {
      const auto artifact = load_artifact(artifact_path);
      std::vector<std::string> warnings;
      const auto records = load_records(records_path, nullptr, &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
      std::string out;
      std::size_t abstained = 0;
      for (const auto& r : records) {
        const auto f = apply(artifact, r);
        abstained += f.abstained ? 1 : 0;
        out += filtered_to_json(f).dump() + "\n";
      }
      write_file_atomically(out_path, out);
      std::cout << "filtered " << records.size() << " responses, " << abstained << " abstained\n";
    } else if (*evaluate_cmd) {
      const double lambda = parse_lambda(lambda_text);
      const auto records = load_checked(records_path, spec);
      plan.seed = seed;
      ExperimentOptions options{parse_baseline(baseline_name), threads};
      const auto report = run_split_experiment(records, plan, alpha, lambda, score_field, spec, options);
      write_file_atomically(out_report, report_to_json(report).dump(2) + "\n");
      std::cout << "coverage=" << format_double(report.mean.empirical_coverage)
                << " filter_ratio=" << format_double(report.mean.filter_ratio)
                << " tpr=" << format_double(report.mean.tpr) << "\n";
    } else if (*sweep_cmd) {
      const auto records = load_checked(records_path, spec);
      plan.seed = seed;
      const auto alphas = parse_double_list(alphas_text);
      auto lambdas = parse_double_list(lambdas_text);
      for (double l : lambdas) validate_lambda(l);
      const auto fields = split_list(fields_text);
      const auto report = sweep(records, plan, alphas, lambdas, fields, spec, {Baseline::kNone, threads});
      write_file_atomically(out_csv, sweep_to_csv(report));
      nlohmann::json meta;
      meta["warnings"] = report.warnings;
      write_file_atomically(out_csv + ".meta.json", meta.dump(2) + "\n");
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << "wrote " << report.rows.size() << " rows\n";
    } else if (*study_cmd) {
      const double lambda = parse_lambda(lambda_text);
      const auto records = load_checked(records_path, spec);
      std::vector<std::size_t> sizes;
      for (double s : parse_double_list(sizes_text)) {
        if (!(s >= 1.0) || s != static_cast<double>(static_cast<std::size_t>(s))) {
          throw ConfigError("calibration sizes must be positive integers");
        }
        sizes.push_back(static_cast<std::size_t>(s));
      }
      const auto points = calibration_size_study(records, sizes, repeats, plan.n_test, alpha, lambda,
                                                 score_field, spec, seed, {Baseline::kNone, threads});
      write_file_atomically(out_csv, calibration_study_to_csv(points));
      std::cout << "wrote " << points.size() << " sizes\n";
    } else if (*simulate_cmd) {
      const auto config = gen_flags.build(seed);
      if (*gen_cmd) {
        const auto records = generate(config, spec);
        save_records(records, out_path);
        std::cout << "wrote " << records.size() << " synthetic responses\n";
      } else {
        const double lambda = parse_lambda(lambda_text);
        const auto result = verify_theorem(config, alpha, lambda, n_calib, n_test, trials, spec, z, threads);
        const auto text = theorem_result_to_json(result).dump(2) + "\n";
        if (!out_report.empty()) write_file_atomically(out_report, text);
        std::cout << text;
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
