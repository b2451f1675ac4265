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

#include "dcp/deferral.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <type_traits>

#include "dcp/errors.hpp"

namespace dcp {

namespace {

double ground_truth_score(const ConformityScorer& scorer,
                          const PolicyInput& input) {
  if (!input.label) {
    throw InputError("oracle deferral needs the ground-truth label");
  }
  return conformity_score(scorer, input.class_probs, *input.label);
}

void check_beta(double beta) {
  if (!(beta >= 0.0 && beta < 1.0)) {
    throw ConfigError("oracle beta must lie in [0, 1)");
  }
}

}  // namespace

bool argmax_is_deferral(std::span<const double> logits) {
  if (logits.empty()) throw InputError("empty logits");
  const auto top = std::max_element(logits.begin(), logits.end());
  return static_cast<std::size_t>(top - logits.begin()) == logits.size() - 1;
}

Decision decide(const DeferralPolicy& policy, const PolicyInput& input) {
  return std::visit(
      [&](const auto& p) -> Decision {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, LearnedArgmax>) {
          if (!p.model) throw ConfigError("learned policy has no model");
          return argmax_is_deferral(forward(*p.model, input.features))
                     ? Decision::kDefer
                     : Decision::kPredict;
        } else if constexpr (std::is_same_v<P, OracleBottomBeta>) {
          return ground_truth_score(p.scorer, input) < p.threshold
                     ? Decision::kDefer
                     : Decision::kPredict;
        } else {
          return ground_truth_score(p.scorer, input) >= p.threshold
                     ? Decision::kDefer
                     : Decision::kPredict;
        }
      },
      policy);
}

ProbVector renormalize(std::span<const double> probs) {
  if (probs.size() < 2) throw InputError("renormalize needs K+1 >= 2 entries");
  const double defer_mass = probs.back();
  if (!(defer_mass < 1.0 - 1e-12)) {
    throw NumericError("deferral mass " + std::to_string(defer_mass) +
                       " leaves nothing to condition on");
  }
  // For a normalized input the class mass equals 1 - defer_mass; summing it
  // directly avoids the cancellation when the deferral slot dominates.
  ProbVector out(probs.begin(), probs.end() - 1);
  const double keep = std::accumulate(out.begin(), out.end(), 0.0);
  for (double& v : out) v /= keep;
  return out;
}

OracleBottomBeta fit_oracle_threshold(std::span<const double> cal_scores,
                                      double beta, ConformityScorer scorer) {
  check_beta(beta);
  if (cal_scores.empty()) throw InputError("no calibration scores");
  std::vector<double> sorted(cal_scores.begin(), cal_scores.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t k = robust_ceil(beta * static_cast<double>(sorted.size()));
  OracleBottomBeta policy;
  policy.beta = beta;
  policy.scorer = scorer;
  if (k > 0) policy.threshold = sorted[k - 1];
  return policy;
}

OracleTopBeta fit_top_threshold(std::span<const double> cal_scores, double beta,
                                ConformityScorer scorer) {
  check_beta(beta);
  if (cal_scores.empty()) throw InputError("no calibration scores");
  std::vector<double> sorted(cal_scores.begin(), cal_scores.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const std::size_t k = robust_ceil(beta * static_cast<double>(sorted.size()));
  OracleTopBeta policy;
  policy.beta = beta;
  policy.scorer = scorer;
  if (k > 0) policy.threshold = sorted[k - 1];
  return policy;
}

std::vector<Decision> decide_all(const DeferralPolicy& policy,
                                 std::span<const CalItem> items) {
  std::vector<Decision> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    out.push_back(decide(policy, {item.features, item.probs, item.label}));
  }
  return out;
}

std::vector<CalItem> prune_calibration(const DeferralPolicy& policy,
                                       std::span<const CalItem> cal_set) {
  std::vector<CalItem> kept;
  const auto* learned = std::get_if<LearnedArgmax>(&policy);
  for (const auto& item : cal_set) {
    if (learned) {
      if (!learned->model) throw ConfigError("learned policy has no model");
      const Vector logits = forward(*learned->model, item.features);
      if (argmax_is_deferral(logits)) continue;
      kept.push_back({item.features, renormalize(softmax(logits)), item.label});
    } else if (decide(policy, {item.features, item.probs, item.label}) ==
               Decision::kPredict) {
      kept.push_back(item);
    }
  }
  return kept;
}

}  // namespace dcp
