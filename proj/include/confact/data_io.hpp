#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "confact/calibration.hpp"
#include "confact/errors.hpp"
#include "confact/extended_real.hpp"
#include "confact/loss_model.hpp"
#include "confact/records.hpp"
#include "confact/report.hpp"

namespace confact {

using json = nlohmann::json;

inline constexpr int kArtifactFormatVersion = 1;

inline const std::vector<std::string>& sweep_csv_columns() {
  static const std::vector<std::string> columns{
      "alpha",       "lambda", "split_index",     "empirical_coverage", "filter_ratio",
      "abstention_rate", "tpr", "fnr", "f1", "error_rate", "avg_loss", "n_calib", "score_field"};
  return columns;
}

// ---------------------------------------------------------------------------
// Numbers
// ---------------------------------------------------------------------------

// Shortest decimal form that parses back to the same double.
inline std::string format_double(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double x = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw DataError("not a number: '" + std::string(s) + "'");
  }
  return x;
}

// Doubles that may be infinite travel as the strings "inf" / "-inf".
inline json extended_to_json(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

inline double extended_from_json(const json& j, const std::string& what) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "-inf") return parse_double(s);
  }
  throw DataError("field '" + what + "' must be a number, \"inf\" or \"-inf\"");
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

// Writes via a sibling temporary file and rename, so readers never observe a
// partially written file.
inline void write_file_atomically(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + tmp.string() + "' for writing");
    out << content;
    out.flush();
    if (!out) throw DataError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw DataError("cannot move output into place at '" + path.string() + "'");
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// ---------------------------------------------------------------------------
// Loss specs
// ---------------------------------------------------------------------------

/// Parses {"name": "...", "weights": {"Type": 3, ...}}. Weight order follows
/// the file.
inline LossSpec loss_spec_from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object()) throw ConfigError("loss spec must be a JSON object");
  if (!j.contains("name") || !j["name"].is_string()) {
    throw ConfigError("loss spec needs a string 'name'");
  }
  if (!j.contains("weights") || !j["weights"].is_object()) {
    throw ConfigError("loss spec needs a 'weights' object");
  }
  std::vector<ErrorWeight> weights;
  for (const auto& [type, w] : j["weights"].items()) {
    if (!w.is_number_unsigned()) {
      throw ConfigError("weight of '" + type + "' must be a non-negative integer");
    }
    weights.push_back({type, w.get<Loss>()});
  }
  return LossSpec(j["name"].get<std::string>(), std::move(weights));
}

inline nlohmann::ordered_json loss_spec_to_json(const LossSpec& spec) {
  nlohmann::ordered_json j;
  j["name"] = spec.name();
  j["weights"] = nlohmann::ordered_json::object();
  for (const auto& w : spec.weights()) j["weights"][w.error_type] = w.weight;
  return j;
}

inline LossSpec load_loss_spec(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  auto j = nlohmann::ordered_json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("loss spec file '" + path.string() + "' is not valid JSON");
  return loss_spec_from_json(j);
}

// A preset name, or a path to a loss spec file.
inline LossSpec resolve_loss_spec(const std::string& name_or_path) {
  for (const auto& preset : preset_names()) {
    if (preset == name_or_path) return make_preset_loss_spec(preset);
  }
  if (std::filesystem::exists(name_or_path)) return load_loss_spec(name_or_path);
  throw ConfigError("'" + name_or_path + "' is neither a loss spec preset nor a readable file");
}

// ---------------------------------------------------------------------------
// Records (JSON-Lines)
// ---------------------------------------------------------------------------

inline json record_to_json(const ResponseRecord& r) {
  json claims = json::array();
  for (const auto& c : r.claims) {
    json jc;
    jc["claim_id"] = c.claim_id;
    jc["text"] = c.text;
    jc["scores"] = json::object();
    for (const auto& [field, value] : c.scores) jc["scores"][field] = value;
    if (c.annotation) {
      jc["errors"] = c.annotation->error_types;
      if (c.annotation->reasoning) jc["reasoning"] = *c.annotation->reasoning;
    }
    claims.push_back(std::move(jc));
  }
  json j;
  j["response_id"] = r.response_id;
  j["image_ref"] = r.image_ref;
  j["prompt"] = r.prompt;
  j["claims"] = std::move(claims);
  return j;
}

namespace detail {

inline std::string optional_string(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) return {};
  if (!j[key].is_string()) throw DataError(where + ": '" + key + "' must be a string");
  return j[key].get<std::string>();
}

inline std::string required_string(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw DataError(where + ": missing string field '" + key + "'");
  }
  return j[key].get<std::string>();
}

}  // namespace detail

inline ResponseRecord record_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw DataError(where + ": expected a JSON object");
  ResponseRecord r;
  r.response_id = detail::required_string(j, "response_id", where);
  r.image_ref = detail::optional_string(j, "image_ref", where);
  r.prompt = detail::optional_string(j, "prompt", where);
  if (!j.contains("claims") || !j["claims"].is_array()) {
    throw DataError(where + ": missing array field 'claims'");
  }
  std::set<std::string> seen;
  for (const auto& jc : j["claims"]) {
    if (!jc.is_object()) throw DataError(where + ": claim must be a JSON object");
    ClaimRecord c;
    c.claim_id = detail::required_string(jc, "claim_id", where);
    const std::string at = where + ", claim '" + c.claim_id + "'";
    if (!seen.insert(c.claim_id).second) throw DataError(at + ": duplicate claim_id");
    c.text = detail::optional_string(jc, "text", at);
    if (jc.contains("scores")) {
      if (!jc["scores"].is_object()) throw DataError(at + ": 'scores' must be an object");
      for (const auto& [field, value] : jc["scores"].items()) {
        if (!value.is_number() || !std::isfinite(value.get<double>())) {
          throw DataError(at + ": score '" + field + "' is not a finite number");
        }
        c.scores[field] = value.get<double>();
      }
    }
    if (jc.contains("errors") && !jc["errors"].is_null()) {
      if (!jc["errors"].is_array()) throw DataError(at + ": 'errors' must be an array");
      ClaimAnnotation a;
      for (const auto& e : jc["errors"]) {
        if (!e.is_string()) throw DataError(at + ": error types must be strings");
        a.error_types.push_back(e.get<std::string>());
      }
      if (jc.contains("reasoning")) a.reasoning = detail::optional_string(jc, "reasoning", at);
      c.annotation = std::move(a);
    }
    r.claims.push_back(std::move(c));
  }
  return r;
}

/// Reads and validates JSON-Lines records. Blank lines are skipped.
///
/// With a loss spec, every annotated error type must belong to it. Score
/// fields that are not shared by every claim are dropped and reported
/// through `warnings` (claims themselves are never dropped).
inline std::vector<ResponseRecord> read_records(std::istream& in, const std::string& source,
                                                const LossSpec* spec = nullptr,
                                                std::vector<std::string>* warnings = nullptr) {
  std::vector<ResponseRecord> records;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw DataError(where + ": malformed JSON");
    auto r = record_from_json(j, where);
    if (!ids.insert(r.response_id).second) {
      throw DataError(where + ": duplicate response_id '" + r.response_id + "'");
    }
    if (spec) {
      for (const auto& c : r.claims) {
        if (!c.annotation) continue;
        for (const auto& type : c.annotation->error_types) {
          if (!spec->contains(type)) {
            throw DataError(where + ": claim '" + c.claim_id + "' uses unknown error type '" + type +
                            "' (loss spec '" + spec->name() + "')");
          }
        }
      }
    }
    records.push_back(std::move(r));
  }

  std::optional<std::set<std::string>> common;
  std::set<std::string> all;
  for (const auto& r : records) {
    for (const auto& c : r.claims) {
      std::set<std::string> fields;
      for (const auto& [f, v] : c.scores) fields.insert(f);
      all.insert(fields.begin(), fields.end());
      if (!common) {
        common = fields;
      } else {
        std::set<std::string> kept;
        for (const auto& f : *common) {
          if (fields.count(f)) kept.insert(f);
        }
        common = std::move(kept);
      }
    }
  }
  if (common && common->size() != all.size()) {
    for (const auto& f : all) {
      if (common->count(f)) continue;
      if (warnings) {
        warnings->push_back(source + ": score field '" + f +
                            "' is missing on some claims and was dropped");
      }
    }
    for (auto& r : records) {
      for (auto& c : r.claims) std::erase_if(c.scores, [&](const auto& kv) { return !common->count(kv.first); });
    }
  }
  return records;
}

inline std::vector<ResponseRecord> load_records(const std::filesystem::path& path,
                                                const LossSpec* spec = nullptr,
                                                std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open records file '" + path.string() + "'");
  return read_records(in, path.string(), spec, warnings);
}

inline std::string records_to_jsonl(std::span<const ResponseRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline void save_records(std::span<const ResponseRecord> records, const std::filesystem::path& path) {
  write_file_atomically(path, records_to_jsonl(records));
}

// ---------------------------------------------------------------------------
// Calibration artifacts
// ---------------------------------------------------------------------------

inline json artifact_to_json(const CalibrationArtifact& a) {
  json j;
  j["format_version"] = kArtifactFormatVersion;
  j["tau_hat"] = extended_to_json(a.tau_hat.value());
  j["alpha"] = a.alpha;
  j["lambda"] = extended_to_json(a.lambda);
  j["n"] = a.n;
  j["score_field"] = a.score_field;
  j["loss_spec_name"] = a.loss_spec_name;
  j["quantile_rank"] = a.quantile_rank;
  j["provenance"] = a.provenance;
  return j;
}

inline CalibrationArtifact artifact_from_json(const json& j) {
  if (!j.is_object()) throw DataError("artifact must be a JSON object");
  if (!j.contains("format_version") || !j["format_version"].is_number_integer()) {
    throw DataError("artifact has no format_version");
  }
  if (j["format_version"].get<int>() != kArtifactFormatVersion) {
    throw DataError("incompatible artifact format_version " + j["format_version"].dump() +
                    " (this build reads version " + std::to_string(kArtifactFormatVersion) + ")");
  }
  for (const char* key : {"tau_hat", "alpha", "lambda", "n", "score_field", "loss_spec_name",
                          "quantile_rank"}) {
    if (!j.contains(key)) throw DataError(std::string("artifact is missing '") + key + "'");
  }
  CalibrationArtifact a;
  const double tau = extended_from_json(j["tau_hat"], "tau_hat");
  if (std::isinf(tau) && tau > 0) throw DataError("artifact tau_hat cannot be +inf");
  a.tau_hat = std::isinf(tau) ? ExtendedReal::neg_inf() : ExtendedReal::finite(tau);
  if (!j["alpha"].is_number()) throw DataError("artifact alpha must be a number");
  a.alpha = j["alpha"].get<double>();
  a.lambda = extended_from_json(j["lambda"], "lambda");
  if (!j["n"].is_number_unsigned() || !j["quantile_rank"].is_number_unsigned()) {
    throw DataError("artifact n and quantile_rank must be non-negative integers");
  }
  a.n = j["n"].get<std::size_t>();
  a.quantile_rank = j["quantile_rank"].get<std::size_t>();
  if (!j["score_field"].is_string() || !j["loss_spec_name"].is_string()) {
    throw DataError("artifact score_field and loss_spec_name must be strings");
  }
  a.score_field = j["score_field"].get<std::string>();
  a.loss_spec_name = j["loss_spec_name"].get<std::string>();
  if (j.contains("provenance") && j["provenance"].is_string()) {
    a.provenance = j["provenance"].get<std::string>();
  }
  if (a.quantile_rank < 1 || a.quantile_rank > a.n) {
    throw DataError("artifact quantile_rank must lie in [1, n]");
  }
  return a;
}

inline void save_artifact(const CalibrationArtifact& a, const std::filesystem::path& path) {
  write_file_atomically(path, artifact_to_json(a).dump(2) + "\n");
}

inline CalibrationArtifact load_artifact(const std::filesystem::path& path) {
  auto j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw DataError("artifact file '" + path.string() + "' is not valid JSON");
  return artifact_from_json(j);
}

// ---------------------------------------------------------------------------
// Filter output
// ---------------------------------------------------------------------------

inline json filtered_to_json(const FilteredResponse& f) {
  json j;
  j["response_id"] = f.response_id;
  j["retained"] = json::array();
  for (const auto& c : f.retained) j["retained"].push_back(c.claim_id);
  j["removed"] = json::array();
  for (const auto& c : f.removed) j["removed"].push_back(c.claim_id);
  j["abstained"] = f.abstained;
  j["merged_text"] = f.merged_text;
  return j;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline json metrics_to_json(const SplitMetrics& m) {
  json j;
  for (const auto& field : kMetricFields) j[field.name] = m.*field.member;
  return j;
}

inline SplitMetrics metrics_from_json(const json& j) {
  SplitMetrics m;
  for (const auto& field : kMetricFields) {
    if (!j.contains(field.name) || !j[field.name].is_number()) {
      throw DataError(std::string("report metrics missing '") + field.name + "'");
    }
    m.*field.member = j[field.name].get<double>();
  }
  return m;
}

inline json report_to_json(const EvaluationReport& r) {
  json j;
  j["alpha"] = r.alpha;
  j["lambda"] = extended_to_json(r.lambda);
  j["score_field"] = r.score_field;
  j["loss_spec_name"] = r.loss_spec_name;
  j["baseline"] = r.baseline;
  j["plan"] = {{"n_calib", r.plan.n_calib},
               {"n_test", r.plan.n_test},
               {"n_splits", r.plan.n_splits},
               {"seed", r.plan.seed}};
  j["mean"] = metrics_to_json(r.mean);
  j["std_error"] = metrics_to_json(r.std_error);
  j["splits"] = json::array();
  for (const auto& s : r.splits) j["splits"].push_back(metrics_to_json(s));
  return j;
}

inline EvaluationReport report_from_json(const json& j) {
  EvaluationReport r;
  try {
    r.alpha = j.at("alpha").get<double>();
    r.lambda = extended_from_json(j.at("lambda"), "lambda");
    r.score_field = j.at("score_field").get<std::string>();
    r.loss_spec_name = j.at("loss_spec_name").get<std::string>();
    r.baseline = j.at("baseline").get<std::string>();
    const auto& p = j.at("plan");
    r.plan.n_calib = p.at("n_calib").get<std::size_t>();
    r.plan.n_test = p.at("n_test").get<std::size_t>();
    r.plan.n_splits = p.at("n_splits").get<std::size_t>();
    r.plan.seed = p.at("seed").get<std::uint64_t>();
    r.mean = metrics_from_json(j.at("mean"));
    r.std_error = metrics_from_json(j.at("std_error"));
    for (const auto& s : j.at("splits")) r.splits.push_back(metrics_from_json(s));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  return r;
}

inline std::string sweep_to_csv(const SweepReport& report) {
  std::string out;
  const auto& cols = sweep_csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) out += ',';
    out += cols[i];
  }
  out += '\n';
  for (const auto& row : report.rows) {
    out += format_double(row.alpha) + ',' + format_double(row.lambda) + ',' + row.split_index;
    for (const auto& field : kMetricFields) out += ',' + format_double(row.metrics.*field.member);
    out += ',' + std::to_string(row.n_calib) + ',' + row.score_field + '\n';
  }
  return out;
}

inline SweepReport sweep_from_csv(std::istream& in) {
  SweepReport report;
  std::string line;
  if (!std::getline(in, line)) throw DataError("sweep CSV is empty");
  std::string expected;
  for (const auto& c : sweep_csv_columns()) expected += (expected.empty() ? "" : ",") + c;
  if (line != expected) throw DataError("sweep CSV header mismatch");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != sweep_csv_columns().size()) {
      throw DataError("sweep CSV line " + std::to_string(line_no) + ": wrong column count");
    }
    SweepRow row;
    row.alpha = parse_double(cells[0]);
    row.lambda = parse_double(cells[1]);
    row.split_index = cells[2];
    for (std::size_t i = 0; i < kMetricFields.size(); ++i) {
      row.metrics.*kMetricFields[i].member = parse_double(cells[3 + i]);
    }
    row.n_calib = static_cast<std::size_t>(parse_double(cells[11]));
    row.score_field = cells[12];
    report.rows.push_back(std::move(row));
  }
  return report;
}

inline std::string calibration_study_to_csv(std::span<const CalibrationSizePoint> points) {
  std::string out =
      "n_calib,repeats,mean_coverage,std_error,ci_low,ci_high,filter_ratio,lower_bound,upper_bound\n";
  for (const auto& p : points) {
    out += std::to_string(p.n_calib) + ',' + std::to_string(p.repeats) + ',' +
           format_double(p.mean_coverage) + ',' + format_double(p.std_error) + ',' +
           format_double(p.ci_low) + ',' + format_double(p.ci_high) + ',' +
           format_double(p.filter_ratio) + ',' + format_double(p.lower_bound) + ',' +
           format_double(p.upper_bound) + '\n';
  }
  return out;
}

}  // namespace confact
