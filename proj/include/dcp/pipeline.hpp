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

#ifndef DCP_PIPELINE_HPP_
#define DCP_PIPELINE_HPP_

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcp/conformal.hpp"
#include "dcp/data_synth.hpp"
#include "dcp/deferral.hpp"
#include "dcp/tensor_nn.hpp"

namespace dcp {

enum class PolicyKind { kLearned, kOracle, kNever };

std::string policy_kind_name(PolicyKind kind);
PolicyKind parse_policy_kind(const std::string& name);

struct ExperimentConfig {
  double alpha = 0.05;
  ConformityScorer scorer = ConformityScorer::lac();
  // Scorers evaluated side by side by run_sweep.
  std::vector<ConformityScorer> sweep_scorers = {
      ConformityScorer::lac(), ConformityScorer::aps(),
      ConformityScorer::raps(0.1, 1)};
  PolicyKind policy = PolicyKind::kLearned;
  double oracle_beta = 0.15;
  TrainConfig train;
  std::vector<std::size_t> hidden = {16};
  std::size_t num_classes = kMogClasses;
  std::size_t n_train = 1000;
  std::size_t n_cal = 1000;
  std::size_t n_val = 1000;
  double variance = 1.0;
  double expert_accuracy = 0.7;
  std::size_t ensemble_size = 5;
  std::vector<double> deferral_targets = {0.0, 0.05, 0.1, 0.2};
  std::vector<double> beta_grid = {0.0,  0.3,   0.4,  0.45,  0.5, 0.55,
                                   0.6,  0.625, 0.65, 0.675, 0.7, 0.725,
                                   0.75, 0.775, 0.8,  0.85,  0.9, 1.0};
  // When set, coverage_trials picks beta_penalty from beta_grid so that the
  // learned policy defers about this fraction of a tuning sample.
  std::optional<double> target_rate;
  std::size_t trials = 5;
  std::uint64_t seed = 0;
  bool keep_top1 = true;

  void validate() const;
  std::vector<std::size_t> layer_sizes() const;
};

// Per-example model outputs. `class_probs` is the Bayes-renormalized K-way
// vector; empty when the deferral slot holds (almost) all mass.
struct ScoredItem {
  Vector features;
  Vector logits;
  ProbVector full_probs;
  ProbVector class_probs;
  std::size_t label = 0;
};

std::vector<ScoredItem> score_items(const MLPModel& model,
                                    std::span<const LabeledExample> data);

struct RoutingDecision {
  std::size_t index = 0;
  bool deferred = false;
  PredictionSet set;  // empty when deferred

  bool operator==(const RoutingDecision&) const = default;
};

struct TrialReport {
  double classifier_accuracy = 0.0;  // argmax on non-deferred
  double system_accuracy_single = 0.0;
  double system_accuracy_ensemble = 0.0;
  double coverage = 0.0;       // non-deferred
  double mean_set_size = 0.0;  // non-deferred
  double set_size_ci = 0.0;    // 95% normal half-width over examples
  double deferral_rate = 0.0;  // realized on validation
  double cal_deferral_rate = 0.0;
  std::size_t n_val = 0;
  std::size_t n_non_deferred = 0;
  double tau_cal = 0.0;
  std::size_t n_cal = 0;  // pruned
  std::optional<double> bias;

  bool operator==(const TrialReport&) const = default;
};

// Trial inputs drawn from independent streams of `seed`.
struct TrialData {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> cal;
  std::vector<LabeledExample> val;
};
TrialData sample_trial_data(const ExperimentConfig& config, std::uint64_t seed);

struct TrialExperts {
  ExpertModel single;
  ExpertEnsemble ensemble;
};
TrialExperts make_experts(const ExperimentConfig& config, std::uint64_t seed);

// Draw-key offsets that keep expert answers on different splits independent.
inline constexpr std::uint64_t kTrainKeyBase = 0;
inline constexpr std::uint64_t kValKeyBase = std::uint64_t{1} << 40;

MLPModel train_deferral_model(const ExperimentConfig& config,
                              std::span<const LabeledExample> train,
                              const ExpertModel& expert, std::uint64_t seed,
                              double beta_penalty,
                              std::vector<double>* epoch_losses = nullptr);

// Outcome of the calibration stage.
struct CalibrationArtifact {
  ConformityScorer scorer;
  PolicyKind policy = PolicyKind::kNever;
  double oracle_beta = 0.0;
  double oracle_threshold = -std::numeric_limits<double>::infinity();
  CalibrationResult result;    // on the non-deferred calibration slice
  CalibrationResult baseline;  // CP on the whole calibration set
  double cal_deferral_rate = 0.0;
  std::uint64_t seed = 0;
};

DeferralPolicy make_policy(const CalibrationArtifact& artifact,
                           std::shared_ptr<const MLPModel> model);

// Prunes `cal` with the configured policy and calibrates on what is left.
// Throws CalibrationError if the policy defers every calibration item.
CalibrationArtifact calibrate_stage(const ExperimentConfig& config,
                                    std::shared_ptr<const MLPModel> model,
                                    std::span<const LabeledExample> cal,
                                    std::uint64_t seed);

struct EvalOutput {
  std::vector<RoutingDecision> decisions;
  std::vector<ScoredItem> items;
  std::vector<std::size_t> single_answers;
  std::vector<std::size_t> ensemble_answers;
  TrialReport report;
  TrialReport baseline;  // CP on every validation example
};

EvalOutput evaluate_stage(const ExperimentConfig& config,
                          std::shared_ptr<const MLPModel> model,
                          const CalibrationArtifact& calibration,
                          std::span<const LabeledExample> val,
                          const TrialExperts& experts);

struct DcpRun {
  std::vector<RoutingDecision> decisions;
  TrialReport report;
  CalibrationArtifact calibration;
};

// Train, prune, calibrate and route one trial.
DcpRun run_dcp(const ExperimentConfig& config, std::uint64_t seed);

// Same data and model as run_dcp, conformal prediction on every example.
DcpRun run_cp_baseline(const ExperimentConfig& config, std::uint64_t seed);

// Fraction correct when non-deferred items take the argmax of `class_probs`
// and deferred items take `expert_answers`.
double system_accuracy(std::span<const RoutingDecision> decisions,
                       std::span<const std::size_t> expert_answers,
                       std::span<const std::size_t> labels,
                       std::span<const ProbVector> class_probs);

struct PruningCheck {
  bool premise_met = false;
  double mean_true_prob_kept = 0.0;
  double mean_true_prob_all = 0.0;
  double tau_pruned = 0.0;
  double tau_full = 0.0;
  double incorrect_kept = 0.0;  // mean wrong labels per set, non-deferred
  double incorrect_all = 0.0;   // mean wrong labels per set, all, full tau
  std::optional<bool> pass;     // unset when the premise is unmet
};

// LAC only. Thresholds come from `cal`, expectations from `eval`.
PruningCheck pruning_check(std::span<const CalPair> cal,
                              std::span<const Decision> cal_decisions,
                              std::span<const CalPair> eval,
                              std::span<const Decision> eval_decisions,
                              double alpha);
PruningCheck pruning_check(const DeferralPolicy& policy,
                              std::span<const CalItem> cal,
                              std::span<const CalItem> eval, double alpha);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
  double ci = 0.0;   // 95% normal half-width of the mean
};
Summary summarize(std::span<const double> values);

struct CoverageTrials {
  std::vector<double> coverage;
  std::vector<double> deferral_rate;
  std::vector<double> set_size;
  std::vector<std::size_t> n_cal_kept;
  std::vector<std::size_t> n_val_kept;
  Summary summary;
  double analytic_std = 0.0;  // at the mean kept sizes
  double beta_penalty = 0.0;
};

// Fixed model and policy; each trial redraws calibration and validation sets.
CoverageTrials coverage_trials(const ExperimentConfig& config,
                               std::size_t n_trials);

struct SweepRow {
  std::string scorer;
  double target_rate = 0.0;
  Summary realized_rate;
  Summary beta_penalty;
  Summary classifier_accuracy;
  Summary system_accuracy_single;
  Summary system_accuracy_ensemble;
  Summary ensemble_gain;  // ensemble minus single, per trial
  Summary mean_set_size;
  Summary coverage;
  std::size_t trials = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // grouped by scorer, then target
  // rates[trial][grid index]: calibration deferral rate per beta_penalty.
  std::vector<std::vector<double>> grid_rates;
};

SweepResult run_sweep(const ExperimentConfig& config);

// Eq.-5 style bias record: what the human answered, what was shown, truth.
struct BiasRecord {
  std::size_t human_label = 0;
  PredictionSet shown;
  std::size_t true_label = 0;
};

// Fraction of records whose human answer is wrong and inside the shown set.
double bias_metric(std::span<const BiasRecord> records);

}  // namespace dcp

#endif  // DCP_PIPELINE_HPP_
