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

#ifndef DCP_DEFERRAL_HPP_
#define DCP_DEFERRAL_HPP_

#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "dcp/conformal.hpp"
#include "dcp/tensor_nn.hpp"
#include "dcp/types.hpp"

namespace dcp {

enum class Decision : int { kPredict = 0, kDefer = 1 };

// Defers when the deferral slot (last output of a K+1-way model) is the
// argmax. Ties resolve to the smallest index, so never to the deferral slot.
struct LearnedArgmax {
  std::shared_ptr<const MLPModel> model;
};

// Oracle from the toy setting: defers when the ground-truth conformity score
// is strictly below `threshold`. Needs the true label.
struct OracleBottomBeta {
  double beta = 0.0;
  double threshold = -std::numeric_limits<double>::infinity();
  ConformityScorer scorer = ConformityScorer::lac();
};

// Counter-premise policy: defers when the ground-truth score is >= threshold,
// i.e. the most confident examples. Used to exercise the pruning premise
// check, never for routing.
struct OracleTopBeta {
  double beta = 0.0;
  double threshold = std::numeric_limits<double>::infinity();
  ConformityScorer scorer = ConformityScorer::lac();
};

using DeferralPolicy = std::variant<LearnedArgmax, OracleBottomBeta, OracleTopBeta>;

// What a policy may look at. `class_probs` are K-way class probabilities and
// are only read by the oracle policies, as is `label`.
struct PolicyInput {
  std::span<const double> features;
  std::span<const double> class_probs;
  std::optional<std::size_t> label;
};

// A calibration or test item. For LearnedArgmax `probs` is whatever the
// caller has; prune_calibration replaces it with the renormalized K-way
// vector. Oracle policies expect K-way `probs`.
struct CalItem {
  Vector features;
  ProbVector probs;
  std::size_t label = 0;
};

bool argmax_is_deferral(std::span<const double> logits);

Decision decide(const DeferralPolicy& policy, const PolicyInput& input);

// First K entries of a K+1 distribution divided by 1 - p_defer.
ProbVector renormalize(std::span<const double> probs);

// Threshold = ceil(beta n)-th smallest score (-infinity when that is 0).
OracleBottomBeta fit_oracle_threshold(std::span<const double> cal_scores,
                                      double beta,
                                      ConformityScorer scorer = ConformityScorer::lac());

// Threshold = ceil(beta n)-th largest score (+infinity when that is 0).
OracleTopBeta fit_top_threshold(std::span<const double> cal_scores, double beta,
                                ConformityScorer scorer = ConformityScorer::lac());

// Items the policy keeps (decide == kPredict), in order.
std::vector<CalItem> prune_calibration(const DeferralPolicy& policy,
                                       std::span<const CalItem> cal_set);

// Convenience: the per-item decision vector for a policy.
std::vector<Decision> decide_all(const DeferralPolicy& policy,
                                 std::span<const CalItem> items);

}  // namespace dcp

#endif  // DCP_DEFERRAL_HPP_
