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

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"
#include "dcp/conformal.hpp"
#include "dcp/errors.hpp"

using namespace dcp;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ProbVector random_probs(std::mt19937_64& rng, std::size_t k) {
  std::gamma_distribution<double> g(0.5, 1.0);
  ProbVector p(k);
  double s = 0;
  for (double& v : p) s += (v = g(rng) + 1e-9);
  for (double& v : p) v /= s;
  return p;
}

// k-th order statistic by repeated minimum extraction; k = 0 gives -inf.
double kth_smallest(std::vector<double> s, std::size_t k) {
  double v = -kInf;
  for (std::size_t i = 0; i < k; ++i) {
    auto it = std::min_element(s.begin(), s.end());
    v = *it;
    s.erase(it);
  }
  return v;
}

}  // namespace

TEST_CASE("conformity scores, spec examples") {
  CHECK(conformity_score(ConformityScorer::lac(), ProbVector{0.7, 0.2, 0.1}, 0) == 0.7);
  CHECK(conformity_score(ConformityScorer::aps(), ProbVector{0.5, 0.3, 0.2}, 1) ==
        doctest::Approx(0.2).epsilon(1e-12));
  CHECK(conformity_score(ConformityScorer::raps(0.1, 1), ProbVector{0.5, 0.3, 0.2}, 1, 1.0) ==
        doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("conformity scores, conventions") {
  const ProbVector p{0.5, 0.3, 0.2};
  // Non-randomized APS ignores u.
  CHECK(conformity_score(ConformityScorer::aps(), p, 1, 0.25) ==
        conformity_score(ConformityScorer::aps(), p, 1, 1.0));
  // Randomized APS uses it.
  CHECK(conformity_score(ConformityScorer::aps(true), p, 1, 0.25) ==
        doctest::Approx(1 - 0.5 - 0.25 * 0.3));
  // Ties in probability rank resolve by class index.
  const ProbVector tie{0.4, 0.4, 0.2};
  CHECK(conformity_score(ConformityScorer::aps(), tie, 0) == doctest::Approx(0.6));
  CHECK(conformity_score(ConformityScorer::aps(), tie, 1) == doctest::Approx(0.2));
  // RAPS penalty starts after rank k_reg.
  CHECK(conformity_score(ConformityScorer::raps(0.5, 2), p, 2) ==
        doctest::Approx(1 - (0.8 + 0.2 + 0.5)));
  CHECK(conformity_score(ConformityScorer::raps(0.5, 2), p, 1) ==
        doctest::Approx(1 - 0.8));

  CHECK_THROWS_AS(conformity_score(ConformityScorer::lac(), ProbVector{0.5, 0.4}, 0), InputError);
  CHECK_THROWS_AS(conformity_score(ConformityScorer::lac(), p, 3), InputError);
  CHECK_THROWS_AS(ConformityScorer::raps(-0.1, 1).validate(), ConfigError);
  CHECK_THROWS_AS(ConformityScorer::raps(0.1, 0).validate(), ConfigError);
}

TEST_CASE("RAPS with lambda 0 equals APS") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(0, 1);
  for (int t = 0; t < 1000; ++t) {
    const ProbVector p = random_probs(rng, 2 + t % 10);
    const double u = unif(rng);
    for (std::size_t y = 0; y < p.size(); ++y) {
      CHECK(conformity_score(ConformityScorer::raps(0.0, 1 + t % 3, true), p, y, u) ==
            conformity_score(ConformityScorer::aps(true), p, y, u));
    }
  }
}

TEST_CASE("conformal_threshold") {
  std::vector<double> s;
  for (int i = 1; i <= 10; ++i) s.push_back(i / 10.0);
  const double tau = conformal_threshold(s, 0.5);
  CHECK(tau == 0.5);
  CHECK(std::count_if(s.begin(), s.end(), [&](double v) { return v >= tau; }) == 6);
  CHECK(conformal_threshold(s, 0.05) == -kInf);
  // 0.15 * 100 is not exactly 15 in binary; the index must still be 15.
  std::vector<double> h;
  for (int i = 1; i <= 99; ++i) h.push_back(i);
  CHECK(conformal_threshold(h, 0.15) == 15);
  CHECK_THROWS_AS(conformal_threshold({}, 0.1), InputError);
  CHECK_THROWS(conformal_threshold(s, 0.0));
  CHECK_THROWS(conformal_threshold(s, 1.0));
}

TEST_CASE("calibrate matches a brute-force order statistic") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> a(0.01, 0.5);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng() % 300;
    std::vector<CalPair> pairs;
    std::vector<double> scores;
    for (std::size_t i = 0; i < n; ++i) {
      CalPair cp{random_probs(rng, 4), rng() % 4};
      scores.push_back(cp.probs[cp.label]);
      pairs.push_back(std::move(cp));
    }
    const double alpha = a(rng);
    const auto res = calibrate(ConformityScorer::lac(), pairs, alpha);
    const auto k = static_cast<std::size_t>(std::floor(alpha * (n + 1) + 1e-9));
    CHECK(res.tau_cal == kth_smallest(scores, k));
    CHECK(res.n_cal == n);
    CHECK(res.alpha == alpha);
    // At least 1 - alpha of the calibration scores clear the threshold.
    const auto kept = std::count_if(scores.begin(), scores.end(),
                                    [&](double v) { return v >= res.tau_cal; });
    CHECK(double(kept) / n >= 1 - alpha - 1e-12);
    // Permutation invariance.
    std::shuffle(pairs.begin(), pairs.end(), rng);
    CHECK(calibrate(ConformityScorer::lac(), pairs, alpha) == res);
  }
  CHECK_THROWS_AS(calibrate(ConformityScorer::lac(), std::vector<CalPair>{}, 0.1), InputError);
}

TEST_CASE("prediction_set") {
  const ProbVector p{0.7, 0.2, 0.1};
  CHECK(prediction_set(ConformityScorer::lac(), p, 0.15).labels == std::vector<std::size_t>{0, 1});
  CHECK(prediction_set(ConformityScorer::lac(), p, -kInf).labels ==
        std::vector<std::size_t>{0, 1, 2});
  CHECK(prediction_set(ConformityScorer::aps(), p, -kInf).size() == 3);
  const ProbVector q{0.4, 0.35, 0.25};
  CHECK(prediction_set(ConformityScorer::lac(), q, 0.5).labels == std::vector<std::size_t>{0});
  CHECK(prediction_set(ConformityScorer::lac(), q, 0.5, {}, false).size() == 0);
}

TEST_CASE("prediction sets shrink as the threshold rises") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> unif(0, 1);
  const ConformityScorer scorers[] = {ConformityScorer::lac(), ConformityScorer::aps(),
                                      ConformityScorer::raps(0.2, 2)};
  for (int t = 0; t < 300; ++t) {
    const ProbVector p = random_probs(rng, 6);
    double lo = unif(rng) * 1.2 - 0.4, hi = unif(rng) * 1.2 - 0.4;
    if (lo > hi) std::swap(lo, hi);
    for (const auto& s : scorers) {
      const auto big = prediction_set(s, p, lo, {}, false);
      const auto small = prediction_set(s, p, hi, {}, false);
      for (std::size_t y : small.labels) CHECK(big.contains(y));
    }
  }
}

TEST_CASE("randomized APS/RAPS sets shrink as u grows") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> unif(0, 1);
  for (int t = 0; t < 300; ++t) {
    const ProbVector p = random_probs(rng, 5);
    const double tau = unif(rng) * 0.8;
    double u1 = unif(rng), u2 = unif(rng);
    if (u1 > u2) std::swap(u1, u2);
    for (const auto& s : {ConformityScorer::aps(true), ConformityScorer::raps(0.1, 1, true)}) {
      const std::vector<double> d1{u1}, d2{u2};
      CHECK(prediction_set(s, p, tau, d2, false).size() <=
            prediction_set(s, p, tau, d1, false).size());
    }
  }
}

TEST_CASE("coverage") {
  const std::vector<PredictionSet> full(3, PredictionSet{{0, 1, 2}});
  CHECK(coverage(full, std::vector<std::size_t>{0, 2, 1}).coverage == 1.0);
  const std::vector<PredictionSet> two{PredictionSet{{0}}, PredictionSet{{1}}};
  const auto c = coverage(two, std::vector<std::size_t>{0, 2});
  CHECK(c.coverage == 0.5);
  CHECK(c.mean_set_size == 1.0);
  CHECK(c.n_val == 2);
  CHECK_THROWS_AS(coverage(two, std::vector<std::size_t>{0}), InputError);
}

TEST_CASE("analytic_coverage_std") {
  // Long-double evaluation of the closed form at n = n_val = 1000, l = 50.
  const long double n = 1000, nv = 1000, l = 50;
  const long double want =
      sqrtl((n + 1 - l) * (n + nv + 1) * l / (nv * (n + 1) * (n + 1) * (n + 2)));
  CHECK(analytic_coverage_std(1000, 1000, 0.05) == doctest::Approx((double)want).epsilon(1e-12));
  CHECK(analytic_coverage_std(1000, 1000, 0.05) == doctest::Approx(0.009735).epsilon(1e-4));
  CHECK(analytic_coverage_std(10, 10, 0.05) == 0.0);
  // Binomial limit as the calibration set grows.
  CHECK(analytic_coverage_std(10000000, 1000, 0.05) ==
        doctest::Approx(std::sqrt(0.05 * 0.95 / 1000)).epsilon(1e-3));
}
