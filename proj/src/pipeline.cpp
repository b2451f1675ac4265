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

#include "dcp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include "dcp/errors.hpp"
#include "dcp/rng.hpp"

namespace dcp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kZ95 = 1.959963984540054;

double fraction(std::size_t num, std::size_t den) {
  return den == 0 ? kNaN : static_cast<double>(num) / static_cast<double>(den);
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) -
                                  v.begin());
}

const ProbVector& class_probs_of(const ScoredItem& item) {
  if (item.class_probs.empty()) {
    throw NumericError("deferral slot holds all probability mass; class "
                       "probabilities cannot be renormalized");
  }
  return item.class_probs;
}

std::vector<double> u_draws_for(const ConformityScorer& scorer,
                                std::uint64_t seed, std::string_view stage,
                                std::size_t n) {
  if (!scorer.randomized) return {};
  std::vector<double> u(n);
  const std::uint64_t stream = derive_seed(seed, stage);
  for (std::size_t i = 0; i < n; ++i) u[i] = counter_uniform(stream, i);
  return u;
}

std::span<const double> draw_at(const std::vector<double>& draws,
                                std::size_t i) {
  if (draws.empty()) return {};
  return {&draws[i], 1};
}

// Decisions of the artifact's policy on scored items.
std::vector<Decision> route_items(const DeferralPolicy& policy,
                                  std::span<const ScoredItem> items) {
  std::vector<Decision> out;
  out.reserve(items.size());
  const bool oracle = !std::holds_alternative<LearnedArgmax>(policy);
  for (const auto& item : items) {
    PolicyInput in{item.features, {}, item.label};
    if (oracle) in.class_probs = class_probs_of(item);
    out.push_back(decide(policy, in));
  }
  return out;
}

TrialReport make_report(std::span<const RoutingDecision> decisions,
                        std::span<const ScoredItem> items,
                        std::span<const std::size_t> single_answers,
                        std::span<const std::size_t> ensemble_answers,
                        const CalibrationResult& calibration,
                        double cal_deferral_rate) {
  TrialReport r;
  r.n_val = items.size();
  r.tau_cal = calibration.tau_cal;
  r.n_cal = calibration.n_cal;
  r.cal_deferral_rate = cal_deferral_rate;

  std::vector<std::size_t> labels;
  std::vector<ProbVector> probs;
  labels.reserve(items.size());
  probs.reserve(items.size());
  for (const auto& it : items) {
    labels.push_back(it.label);
    probs.push_back(it.class_probs);
  }

  std::size_t deferred = 0, correct = 0, covered = 0;
  std::vector<double> sizes;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const auto& d = decisions[i];
    if (d.deferred) {
      ++deferred;
      continue;
    }
    correct += argmax(class_probs_of(items[i])) == items[i].label ? 1 : 0;
    covered += d.set.contains(items[i].label) ? 1 : 0;
    sizes.push_back(static_cast<double>(d.set.size()));
  }
  r.n_non_deferred = sizes.size();
  r.deferral_rate = fraction(deferred, items.size());
  r.classifier_accuracy = fraction(correct, sizes.size());
  r.coverage = fraction(covered, sizes.size());
  const Summary s = summarize(sizes);
  r.mean_set_size = sizes.empty() ? kNaN : s.mean;
  r.set_size_ci = s.ci;
  r.system_accuracy_single =
      system_accuracy(decisions, single_answers, labels, probs);
  r.system_accuracy_ensemble =
      system_accuracy(decisions, ensemble_answers, labels, probs);
  return r;
}

CalibrationArtifact calibrate_items(const ExperimentConfig& config,
                                    std::shared_ptr<const MLPModel> model,
                                    std::span<const ScoredItem> items,
                                    std::uint64_t seed,
                                    std::optional<double> oracle_threshold = {}) {
  if (items.empty()) throw InputError("calibration set is empty");
  CalibrationArtifact art;
  art.scorer = config.scorer;
  art.policy = config.policy;
  art.seed = seed;

  const std::vector<double> u =
      u_draws_for(config.scorer, seed, "u_cal", items.size());
  std::vector<CalPair> all;
  all.reserve(items.size());
  for (const auto& it : items) all.push_back({class_probs_of(it), it.label});
  art.baseline = calibrate(config.scorer, all, config.alpha, u);

  if (config.policy == PolicyKind::kOracle && oracle_threshold) {
    art.oracle_beta = config.oracle_beta;
    art.oracle_threshold = *oracle_threshold;
  } else if (config.policy == PolicyKind::kOracle) {
    std::vector<double> truth;
    truth.reserve(all.size());
    for (const auto& p : all) {
      truth.push_back(conformity_score(config.scorer, p.probs, p.label));
    }
    const OracleBottomBeta fitted =
        fit_oracle_threshold(truth, config.oracle_beta, config.scorer);
    art.oracle_beta = fitted.beta;
    art.oracle_threshold = fitted.threshold;
  }

  const std::vector<Decision> decisions =
      route_items(make_policy(art, std::move(model)), items);
  std::vector<CalPair> kept;
  std::vector<double> kept_u;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (decisions[i] == Decision::kDefer) continue;
    kept.push_back(all[i]);
    if (!u.empty()) kept_u.push_back(u[i]);
  }
  art.cal_deferral_rate = 1.0 - fraction(kept.size(), items.size());
  if (kept.empty()) {
    throw CalibrationError(
        "deferral policy pruned the entire calibration set (realized "
        "deferral rate " + std::to_string(art.cal_deferral_rate) + ")",
        art.cal_deferral_rate);
  }
  art.result = calibrate(config.scorer, kept, config.alpha, kept_u);
  return art;
}

EvalOutput evaluate_items(const ExperimentConfig& config,
                          std::shared_ptr<const MLPModel> model,
                          const CalibrationArtifact& calibration,
                          std::vector<ScoredItem> items,
                          std::span<const LabeledExample> val,
                          const TrialExperts& experts) {
  EvalOutput out;
  const DeferralPolicy policy = make_policy(calibration, std::move(model));
  const std::vector<Decision> decisions = route_items(policy, items);
  const std::vector<double> u =
      u_draws_for(calibration.scorer, calibration.seed, "u_val", items.size());

  std::vector<RoutingDecision> baseline;
  for (std::size_t i = 0; i < items.size(); ++i) {
    RoutingDecision d{i, decisions[i] == Decision::kDefer, {}};
    if (!d.deferred) {
      d.set = prediction_set(calibration.scorer, items[i].class_probs,
                             calibration.result.tau_cal, draw_at(u, i),
                             config.keep_top1);
    }
    out.decisions.push_back(std::move(d));
    baseline.push_back({i, false,
                        prediction_set(calibration.scorer,
                                       class_probs_of(items[i]),
                                       calibration.baseline.tau_cal,
                                       draw_at(u, i), config.keep_top1)});
    out.single_answers.push_back(
        experts.single.predict(val[i], kValKeyBase + i));
    out.ensemble_answers.push_back(
        experts.ensemble.predict(val[i], kValKeyBase + i));
  }
  out.report = make_report(out.decisions, items, out.single_answers,
                           out.ensemble_answers, calibration.result,
                           calibration.cal_deferral_rate);
  out.baseline = make_report(baseline, items, out.single_answers,
                             out.ensemble_answers, calibration.baseline, 0.0);
  out.items = std::move(items);
  return out;
}

std::uint64_t model_seed(std::uint64_t seed) {
  return derive_seed(seed, "model_init");
}

// Index of the grid entry whose rate is closest to target; ties go to the
// smaller beta.
std::size_t closest_index(std::span<const double> rates, double target) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < rates.size(); ++i) {
    if (std::abs(rates[i] - target) < std::abs(rates[best] - target)) best = i;
  }
  return best;
}

double learned_rate(std::span<const ScoredItem> items) {
  std::size_t deferred = 0;
  for (const auto& it : items) {
    deferred += argmax_is_deferral(it.logits) ? 1 : 0;
  }
  return fraction(deferred, items.size());
}

}  // namespace

std::string policy_kind_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kLearned:
      return "learned";
    case PolicyKind::kOracle:
      return "oracle";
    case PolicyKind::kNever:
      return "never";
  }
  return "?";
}

PolicyKind parse_policy_kind(const std::string& name) {
  if (name == "learned") return PolicyKind::kLearned;
  if (name == "oracle") return PolicyKind::kOracle;
  if (name == "never") return PolicyKind::kNever;
  throw ConfigError("unknown policy '" + name + "'");
}

void ExperimentConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  scorer.validate();
  for (const auto& s : sweep_scorers) s.validate();
  train.validate();
  if (n_train == 0 || n_cal == 0 || n_val == 0) {
    throw ConfigError("dataset sizes must be positive");
  }
  if (!(variance > 0.0)) throw ConfigError("variance must be positive");
  if (!(expert_accuracy >= 0.0 && expert_accuracy <= 1.0)) {
    throw ConfigError("expert_accuracy must lie in [0, 1]");
  }
  if (ensemble_size == 0) throw ConfigError("ensemble_size must be positive");
  if (!(oracle_beta >= 0.0 && oracle_beta < 1.0)) {
    throw ConfigError("oracle_beta must lie in [0, 1)");
  }
  if (trials == 0) throw ConfigError("trials must be positive");
  if (beta_grid.empty()) throw ConfigError("beta_grid is empty");
  for (double b : beta_grid) {
    if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("beta_grid entries must lie in [0, 1]");
  }
  for (double t : deferral_targets) {
    if (!(t >= 0.0 && t < 1.0)) throw ConfigError("deferral targets must lie in [0, 1)");
  }
  if (num_classes != kMogClasses) {
    throw ConfigError("the synthetic mixture has exactly 4 classes");
  }
  if (std::any_of(hidden.begin(), hidden.end(),
                  [](std::size_t h) { return h == 0; })) {
    throw ConfigError("hidden layer sizes must be positive");
  }
}

std::vector<std::size_t> ExperimentConfig::layer_sizes() const {
  std::vector<std::size_t> sizes{2};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(num_classes + 1);
  return sizes;
}

std::vector<ScoredItem> score_items(const MLPModel& model,
                                    std::span<const LabeledExample> data) {
  std::vector<ScoredItem> items;
  items.reserve(data.size());
  for (const auto& ex : data) {
    ScoredItem it;
    it.features = ex.features;
    it.logits = forward(model, ex.features);
    it.full_probs = softmax(it.logits);
    if (it.full_probs.back() < 1.0 - 1e-12) {
      it.class_probs = renormalize(it.full_probs);
    } else {
      // Dividing by a vanishing non-deferral mass loses all precision; the
      // softmax over the class logits is the same conditional, computed stably.
      it.class_probs = softmax(std::span<const double>(it.logits).first(it.logits.size() - 1));
    }
    it.label = ex.label;
    items.push_back(std::move(it));
  }
  return items;
}

TrialData sample_trial_data(const ExperimentConfig& config, std::uint64_t seed) {
  return {sample_mog(config.n_train, config.variance, derive_seed(seed, "train_data")),
          sample_mog(config.n_cal, config.variance, derive_seed(seed, "cal_data")),
          sample_mog(config.n_val, config.variance, derive_seed(seed, "val_data"))};
}

TrialExperts make_experts(const ExperimentConfig& config, std::uint64_t seed) {
  return {ExpertModel::uniform(config.expert_accuracy, config.num_classes,
                               derive_seed(seed, "expert")),
          ExpertEnsemble::uniform(config.ensemble_size, config.expert_accuracy,
                                  config.num_classes,
                                  derive_seed(seed, "ensemble"))};
}

MLPModel train_deferral_model(const ExperimentConfig& config,
                              std::span<const LabeledExample> train,
                              const ExpertModel& expert, std::uint64_t seed,
                              double beta_penalty,
                              std::vector<double>* epoch_losses) {
  TrainConfig tc = config.train;
  tc.beta_penalty = beta_penalty;
  tc.seed = derive_seed(seed, "train_shuffle");
  const std::vector<bool> flags =
      expert_correct_flags(expert, train, kTrainKeyBase);
  return dcp::train(mlp_init(config.layer_sizes(), model_seed(seed)), train,
                    flags, tc, epoch_losses);
}

DeferralPolicy make_policy(const CalibrationArtifact& artifact,
                           std::shared_ptr<const MLPModel> model) {
  switch (artifact.policy) {
    case PolicyKind::kLearned:
      if (!model) throw ConfigError("learned policy needs a model");
      return LearnedArgmax{std::move(model)};
    case PolicyKind::kOracle:
      return OracleBottomBeta{artifact.oracle_beta, artifact.oracle_threshold,
                              artifact.scorer};
    case PolicyKind::kNever:
      break;
  }
  return OracleBottomBeta{};
}

CalibrationArtifact calibrate_stage(const ExperimentConfig& config,
                                    std::shared_ptr<const MLPModel> model,
                                    std::span<const LabeledExample> cal,
                                    std::uint64_t seed) {
  config.validate();
  if (!model) throw ConfigError("calibration needs a model");
  const auto items = score_items(*model, cal);
  return calibrate_items(config, std::move(model), items, seed);
}

EvalOutput evaluate_stage(const ExperimentConfig& config,
                          std::shared_ptr<const MLPModel> model,
                          const CalibrationArtifact& calibration,
                          std::span<const LabeledExample> val,
                          const TrialExperts& experts) {
  if (!model) throw ConfigError("evaluation needs a model");
  if (val.empty()) throw InputError("validation set is empty");
  auto items = score_items(*model, val);
  return evaluate_items(config, std::move(model), calibration, std::move(items),
                        val, experts);
}

DcpRun run_dcp(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  const TrialData data = sample_trial_data(config, seed);
  const TrialExperts experts = make_experts(config, seed);
  auto model = std::make_shared<const MLPModel>(train_deferral_model(
      config, data.train, experts.single, seed, config.train.beta_penalty));
  CalibrationArtifact cal = calibrate_stage(config, model, data.cal, seed);
  EvalOutput eval = evaluate_stage(config, model, cal, data.val, experts);
  return {std::move(eval.decisions), eval.report, std::move(cal)};
}

DcpRun run_cp_baseline(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  const TrialData data = sample_trial_data(config, seed);
  const TrialExperts experts = make_experts(config, seed);
  const MLPModel model = train_deferral_model(config, data.train, experts.single,
                                              seed, config.train.beta_penalty);

  std::vector<CalPair> cal_pairs;
  for (const auto& it : score_items(model, data.cal)) {
    cal_pairs.push_back({class_probs_of(it), it.label});
  }
  const auto cal_u = u_draws_for(config.scorer, seed, "u_cal", cal_pairs.size());
  const CalibrationResult result =
      calibrate(config.scorer, cal_pairs, config.alpha, cal_u);

  const auto items = score_items(model, data.val);
  const auto val_u = u_draws_for(config.scorer, seed, "u_val", items.size());
  std::vector<RoutingDecision> decisions;
  std::vector<std::size_t> single, ensemble;
  for (std::size_t i = 0; i < items.size(); ++i) {
    decisions.push_back({i, false,
                         prediction_set(config.scorer, class_probs_of(items[i]),
                                        result.tau_cal, draw_at(val_u, i),
                                        config.keep_top1)});
    single.push_back(experts.single.predict(data.val[i], kValKeyBase + i));
    ensemble.push_back(experts.ensemble.predict(data.val[i], kValKeyBase + i));
  }

  DcpRun run;
  run.calibration.scorer = config.scorer;
  run.calibration.policy = PolicyKind::kNever;
  run.calibration.result = result;
  run.calibration.baseline = result;
  run.calibration.seed = seed;
  run.report = make_report(decisions, items, single, ensemble, result, 0.0);
  run.decisions = std::move(decisions);
  return run;
}

double system_accuracy(std::span<const RoutingDecision> decisions,
                       std::span<const std::size_t> expert_answers,
                       std::span<const std::size_t> labels,
                       std::span<const ProbVector> class_probs) {
  if (decisions.size() != labels.size() ||
      expert_answers.size() != labels.size() ||
      class_probs.size() != labels.size()) {
    throw InputError("system_accuracy inputs differ in length");
  }
  if (labels.empty()) return kNaN;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t answer = decisions[i].deferred
                                   ? expert_answers[i]
                                   : argmax(class_probs[i]);
    correct += answer == labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

PruningCheck pruning_check(std::span<const CalPair> cal,
                              std::span<const Decision> cal_decisions,
                              std::span<const CalPair> eval,
                              std::span<const Decision> eval_decisions,
                              double alpha) {
  if (cal.size() != cal_decisions.size() || eval.size() != eval_decisions.size()) {
    throw InputError("decisions do not align with items");
  }
  if (cal.empty() || eval.empty()) throw InputError("pruning_check needs data");

  auto true_prob_means = [](std::span<const CalPair> pairs,
                            std::span<const Decision> decisions) {
    double all = 0.0, kept = 0.0;
    std::size_t n_kept = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const double p = pairs[i].probs[pairs[i].label];
      all += p;
      if (decisions[i] == Decision::kPredict) {
        kept += p;
        ++n_kept;
      }
    }
    return std::pair{n_kept ? kept / static_cast<double>(n_kept) : kNaN,
                     all / static_cast<double>(pairs.size())};
  };

  std::vector<CalPair> cal_kept;
  for (std::size_t i = 0; i < cal.size(); ++i) {
    if (cal_decisions[i] == Decision::kPredict) cal_kept.push_back(cal[i]);
  }
  const std::size_t eval_kept =
      static_cast<std::size_t>(std::count(eval_decisions.begin(),
                                          eval_decisions.end(), Decision::kPredict));
  if (cal_kept.empty() || eval_kept == 0) {
    throw CalibrationError("policy defers every example",
                           1.0 - fraction(cal_kept.size(), cal.size()));
  }

  PruningCheck r;
  const auto [cal_kept_mean, cal_all_mean] = true_prob_means(cal, cal_decisions);
  const auto [eval_kept_mean, eval_all_mean] =
      true_prob_means(eval, eval_decisions);
  r.mean_true_prob_kept = eval_kept_mean;
  r.mean_true_prob_all = eval_all_mean;
  constexpr double kSlack = 1e-12;
  r.premise_met = cal_kept_mean >= cal_all_mean - kSlack &&
                  eval_kept_mean >= eval_all_mean - kSlack;

  const ConformityScorer lac = ConformityScorer::lac();
  r.tau_full = calibrate(lac, cal, alpha).tau_cal;
  r.tau_pruned = calibrate(lac, cal_kept, alpha).tau_cal;

  auto wrong_in_set = [](const CalPair& p, double tau) {
    std::size_t count = 0;
    for (std::size_t y = 0; y < p.probs.size(); ++y) {
      if (y != p.label && p.probs[y] >= tau) ++count;
    }
    return static_cast<double>(count);
  };
  double kept_total = 0.0, all_total = 0.0;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    all_total += wrong_in_set(eval[i], r.tau_full);
    if (eval_decisions[i] == Decision::kPredict) {
      kept_total += wrong_in_set(eval[i], r.tau_pruned);
    }
  }
  r.incorrect_kept = kept_total / static_cast<double>(eval_kept);
  r.incorrect_all = all_total / static_cast<double>(eval.size());
  if (r.premise_met) r.pass = r.incorrect_kept <= r.incorrect_all + 1e-9;
  return r;
}

PruningCheck pruning_check(const DeferralPolicy& policy,
                              std::span<const CalItem> cal,
                              std::span<const CalItem> eval, double alpha) {
  auto pairs = [](std::span<const CalItem> items) {
    std::vector<CalPair> out;
    out.reserve(items.size());
    for (const auto& it : items) out.push_back({it.probs, it.label});
    return out;
  };
  const auto cal_decisions = decide_all(policy, cal);
  const auto eval_decisions = decide_all(policy, eval);
  return pruning_check(pairs(cal), cal_decisions, pairs(eval), eval_decisions,
                        alpha);
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) return s;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / (n - 1.0));
  s.ci = kZ95 * s.std / std::sqrt(n);
  return s;
}

CoverageTrials coverage_trials(const ExperimentConfig& config,
                               std::size_t n_trials) {
  config.validate();
  if (n_trials < 2) throw ConfigError("coverage_trials needs at least 2 trials");
  const std::uint64_t fixture = derive_seed(config.seed, "coverage_fixture");
  const auto train = sample_mog(config.n_train, config.variance,
                                derive_seed(fixture, "train_data"));
  const TrialExperts experts = make_experts(config, fixture);
  const auto tuning = sample_mog(config.n_cal, config.variance,
                                 derive_seed(fixture, "tuning_data"));

  CoverageTrials out;
  std::shared_ptr<const MLPModel> model;
  if (config.target_rate) {
    std::vector<double> rates;
    std::vector<std::shared_ptr<const MLPModel>> models;
    for (double beta : config.beta_grid) {
      models.push_back(std::make_shared<const MLPModel>(
          train_deferral_model(config, train, experts.single, fixture, beta)));
      rates.push_back(learned_rate(score_items(*models.back(), tuning)));
    }
    const std::size_t pick = closest_index(rates, *config.target_rate);
    model = models[pick];
    out.beta_penalty = config.beta_grid[pick];
  } else {
    out.beta_penalty = config.train.beta_penalty;
    model = std::make_shared<const MLPModel>(train_deferral_model(
        config, train, experts.single, fixture, out.beta_penalty));
  }

  // A fixed policy: the oracle threshold is fitted once on the tuning sample.
  CalibrationArtifact fixed = calibrate_stage(config, model, tuning, fixture);

  for (std::size_t t = 0; t < n_trials; ++t) {
    const std::uint64_t trial_seed = derive_seed(config.seed, "coverage_trial", t);
    const auto cal = sample_mog(config.n_cal, config.variance,
                                derive_seed(trial_seed, "cal_data"));
    const auto val = sample_mog(config.n_val, config.variance,
                                derive_seed(trial_seed, "val_data"));
    const auto cal_items = score_items(*model, cal);
    // The oracle keeps the threshold fitted on the tuning sample.
    const CalibrationArtifact art = calibrate_items(
        config, model, cal_items, trial_seed,
        config.policy == PolicyKind::kOracle
            ? std::optional<double>(fixed.oracle_threshold)
            : std::nullopt);
    const EvalOutput eval = evaluate_items(config, model, art,
                                           score_items(*model, val), val,
                                           experts);
    out.coverage.push_back(eval.report.coverage);
    out.deferral_rate.push_back(eval.report.deferral_rate);
    out.set_size.push_back(eval.report.mean_set_size);
    out.n_cal_kept.push_back(art.result.n_cal);
    out.n_val_kept.push_back(eval.report.n_non_deferred);
  }
  out.summary = summarize(out.coverage);
  auto mean_of = [](const std::vector<std::size_t>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  out.analytic_std = analytic_coverage_std(
      static_cast<std::size_t>(std::llround(mean_of(out.n_cal_kept))),
      static_cast<std::size_t>(std::max<long long>(1, std::llround(mean_of(out.n_val_kept)))),
      config.alpha);
  return out;
}

SweepResult run_sweep(const ExperimentConfig& config) {
  config.validate();
  if (config.deferral_targets.empty()) throw ConfigError("no deferral targets");
  if (config.sweep_scorers.empty()) throw ConfigError("no sweep scorers");
  const std::size_t n_targets = config.deferral_targets.size();
  const std::size_t n_scorers = config.sweep_scorers.size();

  // reports[scorer][target][trial], betas[target][trial]
  std::vector<std::vector<std::vector<TrialReport>>> reports(
      n_scorers, std::vector<std::vector<TrialReport>>(n_targets));
  std::vector<std::vector<double>> betas(n_targets);
  SweepResult result;

  for (std::size_t t = 0; t < config.trials; ++t) {
    const std::uint64_t seed = derive_seed(config.seed, "sweep_trial", t);
    const TrialData data = sample_trial_data(config, seed);
    const TrialExperts experts = make_experts(config, seed);

    struct GridRun {
      std::shared_ptr<const MLPModel> model;
      std::vector<ScoredItem> cal;
    };
    std::vector<GridRun> grid;
    std::vector<double> rates;
    for (double beta : config.beta_grid) {
      auto model = std::make_shared<const MLPModel>(train_deferral_model(
          config, data.train, experts.single, seed, beta));
      auto cal = score_items(*model, data.cal);
      rates.push_back(learned_rate(cal));
      grid.push_back({std::move(model), std::move(cal)});
    }
    result.grid_rates.push_back(rates);

    std::map<std::size_t, std::vector<TrialReport>> by_grid;  // per scorer
    for (std::size_t j = 0; j < n_targets; ++j) {
      const std::size_t g = closest_index(rates, config.deferral_targets[j]);
      betas[j].push_back(config.beta_grid[g]);
      if (!by_grid.count(g)) {
        std::vector<TrialReport> per_scorer;
        const auto val_items = score_items(*grid[g].model, data.val);
        for (const auto& scorer : config.sweep_scorers) {
          ExperimentConfig c = config;
          c.scorer = scorer;
          c.policy = PolicyKind::kLearned;
          const CalibrationArtifact art =
              calibrate_items(c, grid[g].model, grid[g].cal, seed);
          per_scorer.push_back(evaluate_items(c, grid[g].model, art, val_items,
                                              data.val, experts)
                                   .report);
        }
        by_grid.emplace(g, std::move(per_scorer));
      }
      for (std::size_t s = 0; s < n_scorers; ++s) {
        reports[s][j].push_back(by_grid.at(g)[s]);
      }
    }
  }

  for (std::size_t s = 0; s < n_scorers; ++s) {
    for (std::size_t j = 0; j < n_targets; ++j) {
      const auto& rs = reports[s][j];
      auto collect = [&](auto field) {
        std::vector<double> v;
        for (const auto& r : rs) v.push_back(field(r));
        return summarize(v);
      };
      SweepRow row;
      row.scorer = config.sweep_scorers[s].name();
      row.target_rate = config.deferral_targets[j];
      row.trials = rs.size();
      row.realized_rate = collect([](const TrialReport& r) { return r.deferral_rate; });
      row.beta_penalty = summarize(betas[j]);
      row.classifier_accuracy =
          collect([](const TrialReport& r) { return r.classifier_accuracy; });
      row.system_accuracy_single =
          collect([](const TrialReport& r) { return r.system_accuracy_single; });
      row.system_accuracy_ensemble =
          collect([](const TrialReport& r) { return r.system_accuracy_ensemble; });
      row.ensemble_gain = collect([](const TrialReport& r) {
        return r.system_accuracy_ensemble - r.system_accuracy_single;
      });
      row.mean_set_size = collect([](const TrialReport& r) { return r.mean_set_size; });
      row.coverage = collect([](const TrialReport& r) { return r.coverage; });
      result.rows.push_back(row);
    }
  }
  return result;
}

double bias_metric(std::span<const BiasRecord> records) {
  if (records.empty()) throw InputError("bias_metric of an empty record list");
  std::size_t hits = 0;
  for (const auto& r : records) {
    if (r.human_label != r.true_label && r.shown.contains(r.human_label)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

}  // namespace dcp
