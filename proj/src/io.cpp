/*
 * Copyright 2026 The dcp Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "dcp/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "dcp/errors.hpp"
#include "json.hpp"

namespace dcp {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" +
                      value + "'");
  }
  try {
    return std::stoull(value);
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' is out of range");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError("'" + key + "' expects true/false, got '" + value + "'");
}

std::vector<double> parse_doubles(const std::string& key, const std::string& value) {
  std::vector<double> out;
  for (const auto& part : split(value, ',')) out.push_back(parse_double(key, part));
  return out;
}

// Non-finite doubles become null, matching how thresholds are stored.
json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double threshold_from(const json& j, double if_null) {
  return j.is_null() ? if_null : j.get<double>();
}

json scorer_to_json(const ConformityScorer& s) {
  json j{{"kind", s.name()}};
  if (s.kind == ScoreKind::kRaps) {
    j["lambda"] = s.lambda;
    j["k_reg"] = s.k_reg;
  }
  if (s.kind != ScoreKind::kLac) j["randomized"] = s.randomized;
  return j;
}

ConformityScorer scorer_from_json(const json& j) {
  ConformityScorer s;
  s.kind = parse_score_kind(j.at("kind").get<std::string>());
  s.lambda = j.value("lambda", 0.0);
  s.k_reg = j.value("k_reg", std::size_t{1});
  s.randomized = j.value("randomized", false);
  s.validate();
  return s;
}

json calibration_result_json(const CalibrationResult& r) {
  return {{"tau_cal", number_or_null(r.tau_cal)}, {"alpha", r.alpha},
          {"n_cal", r.n_cal}};
}

CalibrationResult calibration_result_from(const json& j) {
  CalibrationResult r;
  r.tau_cal = threshold_from(j.at("tau_cal"), -kInf);
  r.alpha = j.at("alpha").get<double>();
  r.n_cal = j.at("n_cal").get<std::size_t>();
  return r;
}

json report_json(const TrialReport& r) {
  json j{{"classifier_accuracy", number_or_null(r.classifier_accuracy)},
         {"system_accuracy_single", number_or_null(r.system_accuracy_single)},
         {"system_accuracy_ensemble", number_or_null(r.system_accuracy_ensemble)},
         {"coverage", number_or_null(r.coverage)},
         {"mean_set_size", number_or_null(r.mean_set_size)},
         {"set_size_ci", number_or_null(r.set_size_ci)},
         {"deferral_rate", number_or_null(r.deferral_rate)},
         {"cal_deferral_rate", number_or_null(r.cal_deferral_rate)},
         {"n_val", r.n_val},
         {"n_non_deferred", r.n_non_deferred},
         {"tau_cal", number_or_null(r.tau_cal)},
         {"n_cal", r.n_cal}};
  if (r.bias) j["bias"] = *r.bias;
  return j;
}

json summary_json(const Summary& s) {
  return {{"mean", number_or_null(s.mean)}, {"std", number_or_null(s.std)},
          {"ci95", number_or_null(s.ci)}};
}

json config_json(const ExperimentConfig& c) {
  json j;
  std::istringstream in(format_config(c));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    j[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return j;
}

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + num(v[i]);
  return out;
}

std::string scorer_token(const ConformityScorer& s) {
  std::string name = s.name();
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char ch) { return std::tolower(ch); });
  return name;
}

// Applies fn to the active scorer and every sweep scorer of the given kinds.
template <typename Fn>
void for_each_scorer(ExperimentConfig& c, std::initializer_list<ScoreKind> kinds,
                     Fn fn) {
  auto match = [&](const ConformityScorer& s) {
    return std::find(kinds.begin(), kinds.end(), s.kind) != kinds.end();
  };
  if (match(c.scorer)) fn(c.scorer);
  for (auto& s : c.sweep_scorers) {
    if (match(s)) fn(s);
  }
}

// RAPS parameters currently in effect: the active scorer's if it is RAPS,
// else the first RAPS sweep entry, else the defaults.
ConformityScorer current_raps(const ExperimentConfig& c) {
  if (c.scorer.kind == ScoreKind::kRaps) return c.scorer;
  for (const auto& s : c.sweep_scorers) {
    if (s.kind == ScoreKind::kRaps) return s;
  }
  return ConformityScorer::raps(0.1, 1);
}

// A scorer of `kind` carrying only the parameters that kind uses.
ConformityScorer shaped(ScoreKind kind, const ConformityScorer& raps,
                        bool randomized) {
  switch (kind) {
    case ScoreKind::kLac:
      return ConformityScorer::lac();
    case ScoreKind::kAps:
      return ConformityScorer::aps(randomized);
    case ScoreKind::kRaps:
      return ConformityScorer::raps(raps.lambda, raps.k_reg, randomized);
  }
  return ConformityScorer::lac();
}

bool any_randomized(const ExperimentConfig& c) {
  if (c.scorer.randomized) return true;
  for (const auto& s : c.sweep_scorers) {
    if (s.randomized) return true;
  }
  return false;
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading", path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing", path);
  out << content;
  if (!out) throw IoError("failed writing '" + path + "'", path);
}

std::string dataset_to_csv(std::span<const LabeledExample> data) {
  std::ostringstream out;
  out.precision(17);
  const std::size_t dim = data.empty() ? 2 : data.front().features.size();
  for (std::size_t d = 0; d < dim; ++d) out << 'x' << d << ',';
  out << "label\n";
  for (const auto& ex : data) {
    for (double v : ex.features) out << v << ',';
    out << ex.label << '\n';
  }
  return out.str();
}

std::vector<LabeledExample> dataset_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InputError("dataset CSV is empty");
  const auto header = split(trim(line), ',');
  if (header.size() < 2 || header.back() != "label") {
    throw InputError("dataset CSV header must end with a 'label' column");
  }
  const std::size_t dim = header.size() - 1;
  std::vector<LabeledExample> data;
  std::size_t line_no = 1;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      const auto cells = split(trim(line), ',');
      if (cells.size() != header.size()) {
        throw InputError("line " + std::to_string(line_no) + ": expected " +
                         std::to_string(header.size()) + " columns");
      }
      LabeledExample ex;
      for (std::size_t d = 0; d < dim; ++d) {
        const double v = parse_double("line " + std::to_string(line_no), cells[d]);
        if (!std::isfinite(v)) {
          throw InputError("line " + std::to_string(line_no) + ": non-finite feature");
        }
        ex.features.push_back(v);
      }
      ex.label = parse_uint("line " + std::to_string(line_no), cells.back());
      data.push_back(std::move(ex));
    }
  } catch (const ConfigError& e) {
    throw InputError(std::string("dataset CSV: ") + e.what());
  }
  return data;
}

std::string model_to_json(const MLPModel& model) {
  json weights = json::array();
  for (const auto& w : model.weights) weights.push_back(w.data);
  json j{{"layer_sizes", model.layer_sizes},
         {"weights", weights},
         {"biases", model.biases},
         {"activation", model.activation},
         {"seed", model.seed}};
  return j.dump(1);
}

MLPModel model_from_json(const std::string& text) {
  MLPModel m;
  try {
    const json j = json::parse(text);
    m.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    m.activation = j.at("activation").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (m.layer_sizes.size() < 2 || weights.size() + 1 != m.layer_sizes.size()) {
      throw ConfigError("checkpoint weights do not match layer_sizes");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Matrix w;
      w.rows = m.layer_sizes[l + 1];
      w.cols = m.layer_sizes[l];
      w.data = weights[l].get<std::vector<double>>();
      m.weights.push_back(std::move(w));
      m.biases.push_back(biases.at(l).get<std::vector<double>>());
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed model checkpoint: ") + e.what());
  }
  m.validate();
  return m;
}

std::string calibration_to_json(const CalibrationArtifact& a) {
  json j{{"scorer", scorer_to_json(a.scorer)},
         {"alpha", a.result.alpha},
         {"tau_cal", number_or_null(a.result.tau_cal)},
         {"n_cal", a.result.n_cal},
         {"seed", a.seed},
         {"policy",
          {{"kind", policy_kind_name(a.policy)},
           {"oracle_beta", a.oracle_beta},
           {"oracle_threshold", number_or_null(a.oracle_threshold)}}},
         {"cal_deferral_rate", a.cal_deferral_rate},
         {"baseline", calibration_result_json(a.baseline)}};
  return j.dump(1);
}

CalibrationArtifact calibration_from_json(const std::string& text) {
  CalibrationArtifact a;
  try {
    const json j = json::parse(text);
    a.scorer = scorer_from_json(j.at("scorer"));
    a.result.alpha = j.at("alpha").get<double>();
    a.result.tau_cal = threshold_from(j.at("tau_cal"), -kInf);
    a.result.n_cal = j.at("n_cal").get<std::size_t>();
    a.seed = j.at("seed").get<std::uint64_t>();
    const auto& p = j.at("policy");
    a.policy = parse_policy_kind(p.at("kind").get<std::string>());
    a.oracle_beta = p.at("oracle_beta").get<double>();
    a.oracle_threshold = threshold_from(p.at("oracle_threshold"), -kInf);
    a.cal_deferral_rate = j.at("cal_deferral_rate").get<double>();
    a.baseline = calibration_result_from(j.at("baseline"));
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed calibration artifact: ") + e.what());
  }
  return a;
}

void set_config_value(ExperimentConfig& c, const std::string& key,
                      const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "alpha") {
    c.alpha = parse_double(key, value);
  } else if (key == "scorer") {
    c.scorer = shaped(parse_score_kind(value), current_raps(c), any_randomized(c));
  } else if (key == "raps_lambda") {
    const double lambda = parse_double(key, value);
    for_each_scorer(c, {ScoreKind::kRaps}, [&](ConformityScorer& s) { s.lambda = lambda; });
  } else if (key == "raps_k_reg") {
    const auto k = static_cast<std::size_t>(parse_uint(key, value));
    for_each_scorer(c, {ScoreKind::kRaps}, [&](ConformityScorer& s) { s.k_reg = k; });
  } else if (key == "randomized") {
    const bool r = parse_bool(key, value);
    for_each_scorer(c, {ScoreKind::kAps, ScoreKind::kRaps},
                    [&](ConformityScorer& s) { s.randomized = r; });
  } else if (key == "sweep_scorers") {
    const ConformityScorer raps = current_raps(c);
    const bool randomized = any_randomized(c);
    std::vector<ConformityScorer> scorers;
    for (const auto& name : split(value, ',')) {
      scorers.push_back(shaped(parse_score_kind(trim(name)), raps, randomized));
    }
    c.sweep_scorers = std::move(scorers);
  } else if (key == "policy") {
    c.policy = parse_policy_kind(value);
  } else if (key == "oracle_beta") {
    c.oracle_beta = parse_double(key, value);
  } else if (key == "beta_penalty") {
    c.train.beta_penalty = parse_double(key, value);
  } else if (key == "epochs") {
    c.train.epochs = parse_uint(key, value);
  } else if (key == "learning_rate") {
    c.train.learning_rate = parse_double(key, value);
  } else if (key == "batch_size") {
    c.train.batch_size = parse_uint(key, value);
  } else if (key == "hidden") {
    c.hidden.clear();
    for (const auto& part : split(value, ',')) c.hidden.push_back(parse_uint(key, part));
  } else if (key == "n_train") {
    c.n_train = parse_uint(key, value);
  } else if (key == "n_cal") {
    c.n_cal = parse_uint(key, value);
  } else if (key == "n_val") {
    c.n_val = parse_uint(key, value);
  } else if (key == "variance") {
    c.variance = parse_double(key, value);
  } else if (key == "expert_accuracy") {
    c.expert_accuracy = parse_double(key, value);
  } else if (key == "ensemble_size") {
    c.ensemble_size = parse_uint(key, value);
  } else if (key == "targets") {
    c.deferral_targets = parse_doubles(key, value);
  } else if (key == "beta_grid") {
    c.beta_grid = parse_doubles(key, value);
  } else if (key == "target_rate") {
    if (value == "none" || value.empty()) {
      c.target_rate.reset();
    } else {
      c.target_rate = parse_double(key, value);
    }
  } else if (key == "trials") {
    c.trials = parse_uint(key, value);
  } else if (key == "seed") {
    c.seed = parse_uint(key, value);
  } else if (key == "keep_top1") {
    c.keep_top1 = parse_bool(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    set_config_value(c, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  c.validate();
  return c;
}

std::string format_config(const ExperimentConfig& c) {
  std::ostringstream out;
  std::string sweep;
  for (std::size_t i = 0; i < c.sweep_scorers.size(); ++i) {
    sweep += (i ? "," : "") + scorer_token(c.sweep_scorers[i]);
  }
  std::string hidden;
  for (std::size_t i = 0; i < c.hidden.size(); ++i) {
    hidden += (i ? "," : "") + std::to_string(c.hidden[i]);
  }
  out << "alpha = " << num(c.alpha) << '\n'
      << "scorer = " << scorer_token(c.scorer) << '\n'
      << "raps_lambda = " << num(current_raps(c).lambda) << '\n'
      << "raps_k_reg = " << current_raps(c).k_reg << '\n'
      << "randomized = " << (any_randomized(c) ? "true" : "false") << '\n'
      << "sweep_scorers = " << sweep << '\n'
      << "policy = " << policy_kind_name(c.policy) << '\n'
      << "oracle_beta = " << num(c.oracle_beta) << '\n'
      << "beta_penalty = " << num(c.train.beta_penalty) << '\n'
      << "epochs = " << c.train.epochs << '\n'
      << "learning_rate = " << num(c.train.learning_rate) << '\n'
      << "batch_size = " << c.train.batch_size << '\n'
      << "hidden = " << hidden << '\n'
      << "n_train = " << c.n_train << '\n'
      << "n_cal = " << c.n_cal << '\n'
      << "n_val = " << c.n_val << '\n'
      << "variance = " << num(c.variance) << '\n'
      << "expert_accuracy = " << num(c.expert_accuracy) << '\n'
      << "ensemble_size = " << c.ensemble_size << '\n'
      << "targets = " << join_doubles(c.deferral_targets) << '\n'
      << "beta_grid = " << join_doubles(c.beta_grid) << '\n'
      << "target_rate = "
      << (c.target_rate ? join_doubles({*c.target_rate}) : std::string("none"))
      << '\n'
      << "trials = " << c.trials << '\n'
      << "seed = " << c.seed << '\n'
      << "keep_top1 = " << (c.keep_top1 ? "true" : "false") << '\n';
  return out.str();
}

std::string report_to_json(const TrialReport& report) {
  return report_json(report).dump(1);
}

std::string eval_report_to_json(const EvalOutput& eval,
                                const CalibrationArtifact& calibration) {
  json j{{"scorer", scorer_to_json(calibration.scorer)},
         {"policy", policy_kind_name(calibration.policy)},
         {"alpha", calibration.result.alpha},
         {"dcp", report_json(eval.report)},
         {"cp_baseline", report_json(eval.baseline)}};
  return j.dump(1);
}

std::string routing_to_json(const EvalOutput& eval, std::size_t num_classes) {
  json items = json::array();
  for (std::size_t i = 0; i < eval.decisions.size(); ++i) {
    const auto& d = eval.decisions[i];
    const auto& item = eval.items[i];
    std::vector<std::size_t> shown = d.set.labels;
    const auto& p = item.class_probs;
    std::stable_sort(shown.begin(), shown.end(), [&](std::size_t a, std::size_t b) {
      return p[a] > p[b];
    });
    items.push_back({{"index", d.index},
                     {"features", item.features},
                     {"deferred", d.deferred},
                     {"set", shown},
                     {"label", item.label}});
  }
  json names = json::array();
  for (std::size_t k = 0; k < num_classes; ++k) names.push_back(std::to_string(k));
  json j{{"version", 1},
         {"num_classes", num_classes},
         {"label_names", names},
         {"items", items}};
  return j.dump(1);
}

std::string sweep_to_csv(const SweepResult& sweep) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "scorer,target_rate,realized_rate,realized_rate_ci,beta_penalty,"
         "classifier_accuracy,classifier_accuracy_ci,system_accuracy_single,"
         "system_accuracy_single_ci,system_accuracy_ensemble,"
         "system_accuracy_ensemble_ci,mean_set_size,mean_set_size_ci,"
         "coverage,coverage_ci,trials\n";
  for (const auto& r : sweep.rows) {
    out << r.scorer << ',' << r.target_rate << ',' << r.realized_rate.mean << ','
        << r.realized_rate.ci << ',' << r.beta_penalty.mean << ','
        << r.classifier_accuracy.mean << ',' << r.classifier_accuracy.ci << ','
        << r.system_accuracy_single.mean << ',' << r.system_accuracy_single.ci
        << ',' << r.system_accuracy_ensemble.mean << ','
        << r.system_accuracy_ensemble.ci << ',' << r.mean_set_size.mean << ','
        << r.mean_set_size.ci << ',' << r.coverage.mean << ',' << r.coverage.ci
        << ',' << r.trials << '\n';
  }
  return out.str();
}

std::string sweep_to_json(const SweepResult& sweep,
                          const ExperimentConfig& config) {
  json rows = json::array();
  for (const auto& r : sweep.rows) {
    rows.push_back({{"scorer", r.scorer},
                    {"target_rate", r.target_rate},
                    {"realized_rate", summary_json(r.realized_rate)},
                    {"beta_penalty", summary_json(r.beta_penalty)},
                    {"classifier_accuracy", summary_json(r.classifier_accuracy)},
                    {"system_accuracy_single", summary_json(r.system_accuracy_single)},
                    {"system_accuracy_ensemble",
                     summary_json(r.system_accuracy_ensemble)},
                    {"ensemble_gain", summary_json(r.ensemble_gain)},
                    {"mean_set_size", summary_json(r.mean_set_size)},
                    {"coverage", summary_json(r.coverage)},
                    {"trials", r.trials}});
  }
  json j{{"config", config_json(config)},
         {"rows", rows},
         {"grid_rates", sweep.grid_rates}};
  return j.dump(1);
}

std::string coverage_to_json(const CoverageTrials& t,
                             const ExperimentConfig& config) {
  const double mean_rate =
      t.deferral_rate.empty()
          ? 0.0
          : std::accumulate(t.deferral_rate.begin(), t.deferral_rate.end(), 0.0) /
                static_cast<double>(t.deferral_rate.size());
  json j{{"config", config_json(config)},
         {"trials", t.coverage.size()},
         {"mean", t.summary.mean},
         {"std", t.summary.std},
         {"analytic_std", t.analytic_std},
         {"mean_deferral_rate", mean_rate},
         {"beta_penalty", t.beta_penalty},
         {"coverage", t.coverage},
         {"deferral_rate", t.deferral_rate},
         {"mean_set_size", t.set_size}};
  return j.dump(1);
}

}  // namespace dcp
