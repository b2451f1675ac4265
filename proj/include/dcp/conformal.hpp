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

#ifndef DCP_CONFORMAL_HPP_
#define DCP_CONFORMAL_HPP_

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dcp/types.hpp"

namespace dcp {

enum class ScoreKind { kLac, kAps, kRaps };

// Conformity score family. Scores are oriented so that higher means more
// conforming; a label enters the prediction set when its score >= tau_cal.
struct ConformityScorer {
  ScoreKind kind = ScoreKind::kLac;
  double lambda = 0.0;      // RAPS only
  std::size_t k_reg = 1;    // RAPS only
  bool randomized = false;  // APS/RAPS only

  static ConformityScorer lac() { return {}; }
  static ConformityScorer aps(bool randomized = false) {
    return {ScoreKind::kAps, 0.0, 1, randomized};
  }
  static ConformityScorer raps(double lambda, std::size_t k_reg,
                               bool randomized = false) {
    return {ScoreKind::kRaps, lambda, k_reg, randomized};
  }

  void validate() const;
  std::string name() const;  // "LAC", "APS", "RAPS"
  bool operator==(const ConformityScorer&) const = default;
};

ScoreKind parse_score_kind(const std::string& name);

struct CalibrationResult {
  // -infinity when floor(alpha (n+1)) == 0, i.e. every label is admitted.
  double tau_cal = -std::numeric_limits<double>::infinity();
  double alpha = 0.1;
  std::size_t n_cal = 0;

  bool operator==(const CalibrationResult&) const = default;
};

struct CalPair {
  ProbVector probs;  // over K classes
  std::size_t label = 0;
};

struct PredictionSet {
  std::vector<std::size_t> labels;  // ascending

  bool contains(std::size_t label) const;
  std::size_t size() const { return labels.size(); }
  bool operator==(const PredictionSet&) const = default;
};

struct CoverageStats {
  double coverage = 0.0;
  double mean_set_size = 0.0;
  std::size_t n_val = 0;
};

// Score of `label` under `probs`. Ranks break probability ties by class index.
// u is ignored (taken as 1) unless the scorer is randomized.
double conformity_score(const ConformityScorer& scorer,
                        std::span<const double> probs, std::size_t label,
                        double u = 1.0);

// Scores of every label at once. `u_draws` may be empty (u = 1), hold one draw
// shared by all labels, or one draw per label.
std::vector<double> conformity_scores(const ConformityScorer& scorer,
                                      std::span<const double> probs,
                                      std::span<const double> u_draws = {});

// k-th smallest score with k = floor(alpha (n+1)); -infinity when k == 0.
double conformal_threshold(std::vector<double> scores, double alpha);

// `u_draws` is empty or holds one draw per calibration pair.
CalibrationResult calibrate(const ConformityScorer& scorer,
                            std::span<const CalPair> cal_pairs, double alpha,
                            std::span<const double> u_draws = {});

// Labels with score >= tau_cal. When the set comes out empty and keep_top1 is
// set, the argmax label is returned instead.
PredictionSet prediction_set(const ConformityScorer& scorer,
                             std::span<const double> probs, double tau_cal,
                             std::span<const double> u_draws = {},
                             bool keep_top1 = true);

CoverageStats coverage(std::span<const PredictionSet> sets,
                       std::span<const std::size_t> labels);

// Standard deviation of split-conformal coverage with n calibration and n_val
// validation points, l = floor((n+1) alpha). Returns 0 when l == 0.
double analytic_coverage_std(std::size_t n, std::size_t n_val, double alpha);

// floor / ceil that treat values within 1e-9 of an integer as that integer,
// so 0.15 * 100 lands on 15.
std::size_t robust_floor(double x);
std::size_t robust_ceil(double x);

}  // namespace dcp

#endif  // DCP_CONFORMAL_HPP_
