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

#include "dcp/conformal.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "dcp/errors.hpp"

namespace dcp {

namespace {

constexpr double kNormTolerance = 1e-6;

void check_probs(std::span<const double> probs) {
  if (probs.empty()) throw InputError("empty probability vector");
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (!(std::abs(total - 1.0) <= kNormTolerance)) {
    throw InputError("probabilities sum to " + std::to_string(total) +
                     ", expected 1");
  }
}

// True if class a ranks strictly above class b.
bool ranks_above(std::span<const double> probs, std::size_t a, std::size_t b) {
  return probs[a] > probs[b] || (probs[a] == probs[b] && a < b);
}

// 1 - cumulative mass (randomized at the label) - rank penalty.
double adaptive_score(const ConformityScorer& s, double mass_above, double p,
                      std::size_t rank, double u) {
  double penalty = 0.0;
  if (s.kind == ScoreKind::kRaps && rank > s.k_reg) {
    penalty = s.lambda * static_cast<double>(rank - s.k_reg);
  }
  return 1.0 - (mass_above + u * p + penalty);
}

double draw_for(std::span<const double> u_draws, std::size_t label) {
  if (u_draws.empty()) return 1.0;
  if (u_draws.size() == 1) return u_draws[0];
  return u_draws[label];
}

}  // namespace

void ConformityScorer::validate() const {
  if (kind == ScoreKind::kRaps) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
      throw ConfigError("RAPS lambda must be non-negative");
    }
    if (k_reg < 1) throw ConfigError("RAPS k_reg must be at least 1");
  }
}

std::string ConformityScorer::name() const {
  switch (kind) {
    case ScoreKind::kLac:
      return "LAC";
    case ScoreKind::kAps:
      return "APS";
    case ScoreKind::kRaps:
      return "RAPS";
  }
  return "?";
}

ScoreKind parse_score_kind(const std::string& name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower == "lac") return ScoreKind::kLac;
  if (lower == "aps") return ScoreKind::kAps;
  if (lower == "raps") return ScoreKind::kRaps;
  throw ConfigError("unknown conformity score '" + name + "'");
}

bool PredictionSet::contains(std::size_t label) const {
  return std::binary_search(labels.begin(), labels.end(), label);
}

double conformity_score(const ConformityScorer& scorer,
                        std::span<const double> probs, std::size_t label,
                        double u) {
  check_probs(probs);
  if (label >= probs.size()) {
    throw InputError("label " + std::to_string(label) + " out of range");
  }
  if (scorer.kind == ScoreKind::kLac) return probs[label];
  if (!scorer.randomized) u = 1.0;
  double mass_above = 0.0;
  std::size_t rank = 1;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (j != label && ranks_above(probs, j, label)) {
      mass_above += probs[j];
      ++rank;
    }
  }
  return adaptive_score(scorer, mass_above, probs[label], rank, u);
}

std::vector<double> conformity_scores(const ConformityScorer& scorer,
                                      std::span<const double> probs,
                                      std::span<const double> u_draws) {
  check_probs(probs);
  const std::size_t k = probs.size();
  if (u_draws.size() > 1 && u_draws.size() != k) {
    throw InputError("u_draws must be empty, a single draw, or one per label");
  }
  std::vector<double> scores(k);
  if (scorer.kind == ScoreKind::kLac) {
    std::copy(probs.begin(), probs.end(), scores.begin());
    return scores;
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ranks_above(probs, a, b);
  });
  double mass_above = 0.0;
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t label = order[r];
    const double u = scorer.randomized ? draw_for(u_draws, label) : 1.0;
    scores[label] = adaptive_score(scorer, mass_above, probs[label], r + 1, u);
    mass_above += probs[label];
  }
  return scores;
}

std::size_t robust_floor(double x) {
  return static_cast<std::size_t>(std::floor(x + 1e-9));
}

std::size_t robust_ceil(double x) {
  return static_cast<std::size_t>(std::ceil(x - 1e-9));
}

double conformal_threshold(std::vector<double> scores, double alpha) {
  if (scores.empty()) throw InputError("calibration set is empty");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("alpha must lie in (0, 1)");
  }
  const std::size_t n = scores.size();
  const std::size_t k = robust_floor(alpha * static_cast<double>(n + 1));
  if (k == 0) return -std::numeric_limits<double>::infinity();
  std::nth_element(scores.begin(), scores.begin() + (k - 1), scores.end());
  return scores[k - 1];
}

CalibrationResult calibrate(const ConformityScorer& scorer,
                            std::span<const CalPair> cal_pairs, double alpha,
                            std::span<const double> u_draws) {
  scorer.validate();
  if (cal_pairs.empty()) throw InputError("calibration set is empty");
  if (!u_draws.empty() && u_draws.size() != cal_pairs.size()) {
    throw InputError("u_draws must hold one draw per calibration pair");
  }
  std::vector<double> scores;
  scores.reserve(cal_pairs.size());
  for (std::size_t i = 0; i < cal_pairs.size(); ++i) {
    const double u = u_draws.empty() ? 1.0 : u_draws[i];
    scores.push_back(
        conformity_score(scorer, cal_pairs[i].probs, cal_pairs[i].label, u));
  }
  return {conformal_threshold(std::move(scores), alpha), alpha,
          cal_pairs.size()};
}

PredictionSet prediction_set(const ConformityScorer& scorer,
                             std::span<const double> probs, double tau_cal,
                             std::span<const double> u_draws, bool keep_top1) {
  const std::vector<double> scores = conformity_scores(scorer, probs, u_draws);
  PredictionSet set;
  for (std::size_t y = 0; y < scores.size(); ++y) {
    if (scores[y] >= tau_cal) set.labels.push_back(y);
  }
  if (set.labels.empty() && keep_top1) {
    set.labels.push_back(static_cast<std::size_t>(
        std::max_element(probs.begin(), probs.end()) - probs.begin()));
  }
  return set;
}

CoverageStats coverage(std::span<const PredictionSet> sets,
                       std::span<const std::size_t> labels) {
  if (sets.size() != labels.size()) {
    throw InputError("sets and labels differ in length");
  }
  if (sets.empty()) throw InputError("coverage of an empty validation set");
  std::size_t hits = 0;
  std::size_t total_size = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    hits += sets[i].contains(labels[i]) ? 1 : 0;
    total_size += sets[i].size();
  }
  const double n = static_cast<double>(sets.size());
  return {static_cast<double>(hits) / n, static_cast<double>(total_size) / n,
          sets.size()};
}

double analytic_coverage_std(std::size_t n, std::size_t n_val, double alpha) {
  if (n == 0 || n_val == 0) throw ConfigError("n and n_val must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("alpha must lie in (0, 1)");
  }
  const std::size_t l = robust_floor(static_cast<double>(n + 1) * alpha);
  if (l == 0) return 0.0;
  const long double nn = n, nv = n_val, ll = l;
  const long double num = (nn + 1 - ll) * (nn + nv + 1) * ll;
  const long double den = nv * (nn + 1) * (nn + 1) * (nn + 2);
  return static_cast<double>(std::sqrt(num / den));
}

}  // namespace dcp
