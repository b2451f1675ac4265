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
#include <memory>
#include <random>
#include <vector>

#include "doctest.h"
#include "dcp/deferral.hpp"
#include "dcp/errors.hpp"

using namespace dcp;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Single linear layer whose logits equal the input features.
std::shared_ptr<const MLPModel> identity_model(std::size_t k_plus_1) {
  MLPModel m = mlp_init(std::vector<std::size_t>{k_plus_1, k_plus_1}, 1);
  std::fill(m.weights[0].data.begin(), m.weights[0].data.end(), 0.0);
  for (std::size_t i = 0; i < k_plus_1; ++i) m.weights[0](i, i) = 1.0;
  std::fill(m.biases[0].begin(), m.biases[0].end(), 0.0);
  return std::make_shared<const MLPModel>(std::move(m));
}

Decision decide_logits(const std::vector<double>& logits) {
  const DeferralPolicy policy = LearnedArgmax{identity_model(logits.size())};
  return decide(policy, PolicyInput{logits, {}, std::nullopt});
}

std::vector<CalItem> lac_items(const std::vector<double>& true_probs) {
  std::vector<CalItem> items;
  for (double p : true_probs) {
    const double rest = (1 - p) / 3;
    items.push_back({{0.0, 0.0}, {p, rest, rest, rest}, 0});
  }
  return items;
}

}  // namespace

TEST_CASE("learned argmax policy") {
  CHECK(decide_logits({0.1, 0.2, 0.3, 0.1, 0.9}) == Decision::kDefer);
  CHECK(decide_logits({0.9, 0.2, 0.3, 0.1, 0.5}) == Decision::kPredict);
  CHECK(decide_logits({0.4, 0.4, 0.4, 0.4, 0.4}) == Decision::kPredict);
  CHECK(decide_logits({0.1, 0.9, 0.3, 0.1, 0.9}) == Decision::kPredict);
  const DeferralPolicy policy = LearnedArgmax{identity_model(5)};
  const std::vector<double> short_x{1.0, 2.0};
  CHECK_THROWS_AS(decide(policy, PolicyInput{short_x, {}, std::nullopt}), InputError);
}

TEST_CASE("renormalize") {
  const ProbVector a = renormalize(ProbVector{0.4, 0.3, 0.1, 0.2});
  CHECK(a[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(a[1] == doctest::Approx(0.375).epsilon(1e-14));
  CHECK(a[2] == doctest::Approx(0.125).epsilon(1e-14));
  CHECK(renormalize(ProbVector{0.6, 0.4, 0.0}) == ProbVector{0.6, 0.4});
  for (double v : renormalize(ProbVector{0.1, 0.1, 0.1, 0.7}))
    CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-14));
  CHECK_THROWS_AS(renormalize(ProbVector{0.0, 0.0, 1.0}), NumericError);
}

TEST_CASE("renormalize: normalization and order preservation") {
  std::mt19937_64 rng(31);
  std::exponential_distribution<double> e(1.0);
  for (int t = 0; t < 1000; ++t) {
    ProbVector p(3 + t % 8);
    double s = 0;
    for (double& v : p) s += (v = e(rng));
    for (double& v : p) v /= s;
    const ProbVector q = renormalize(p);
    double total = 0;
    for (double v : q) total += v;
    CHECK(std::abs(total - 1.0) <= 1e-12);
    for (std::size_t i = 0; i < q.size(); ++i)
      for (std::size_t j = 0; j < q.size(); ++j)
        if (p[i] < p[j]) CHECK(q[i] < q[j]);
  }
}

TEST_CASE("fit_oracle_threshold") {
  std::vector<double> s;
  for (int i = 1; i <= 100; ++i) s.push_back(i / 100.0);
  const auto p = fit_oracle_threshold(s, 0.15);
  CHECK(p.threshold == 0.15);
  CHECK(std::count_if(s.begin(), s.end(), [&](double v) { return v < p.threshold; }) == 14);
  CHECK(fit_oracle_threshold(s, 0.0).threshold == -kInf);
  CHECK(fit_oracle_threshold(std::vector<double>{0.2, 0.4, 0.6, 0.8}, 0.5).threshold == 0.4);
  CHECK_THROWS_AS(fit_oracle_threshold(std::vector<double>{}, 0.1), InputError);
  CHECK_THROWS_AS(fit_oracle_threshold(s, 1.0), ConfigError);

  const auto items = lac_items({0.2, 0.4, 0.6, 0.8});
  const DeferralPolicy policy = fit_oracle_threshold(std::vector<double>{0.2, 0.4, 0.6, 0.8}, 0.5);
  const auto d = decide_all(policy, items);
  CHECK(std::count(d.begin(), d.end(), Decision::kDefer) == 1);
  CHECK(d[0] == Decision::kDefer);
  // The oracle needs the true label.
  CHECK_THROWS_AS(decide(policy, PolicyInput{items[0].features, items[0].probs, std::nullopt}),
                  InputError);
}

TEST_CASE("prune_calibration") {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::vector<double> probs(1000);
  for (double& v : probs) v = u(rng);
  const auto items = lac_items(probs);

  SUBCASE("never-defer keeps everything in order") {
    const DeferralPolicy never = OracleBottomBeta{};
    const auto kept = prune_calibration(never, items);
    REQUIRE(kept.size() == items.size());
    for (std::size_t i = 0; i < kept.size(); ++i) CHECK(kept[i].probs == items[i].probs);
  }
  SUBCASE("always-defer empties the set") {
    OracleBottomBeta all;
    all.threshold = kInf;
    CHECK(prune_calibration(DeferralPolicy{all}, items).empty());
  }
  SUBCASE("oracle beta 0.15 keeps about 850") {
    const auto policy = fit_oracle_threshold(probs, 0.15);
    const auto kept = prune_calibration(DeferralPolicy{policy}, items);
    CHECK(kept.size() >= 849);
    CHECK(kept.size() <= 851);
    // Every survivor clears the deferral threshold, so calibrating on the
    // pruned set can only raise the threshold.
    std::vector<CalPair> full, pruned;
    for (const auto& it : items) full.push_back({it.probs, it.label});
    for (const auto& it : kept) {
      CHECK(it.probs[it.label] >= policy.threshold);
      pruned.push_back({it.probs, it.label});
    }
    const auto lac = ConformityScorer::lac();
    CHECK(calibrate(lac, pruned, 0.05).tau_cal >= calibrate(lac, full, 0.05).tau_cal);
  }
  SUBCASE("learned policy renormalizes survivors") {
    const DeferralPolicy policy = LearnedArgmax{identity_model(3)};
    const std::vector<CalItem> raw{{{2.0, 0.0, 1.0}, {}, 0}, {{0.0, 0.0, 3.0}, {}, 1}};
    const auto kept = prune_calibration(policy, raw);
    REQUIRE(kept.size() == 1);
    const ProbVector full = softmax(raw[0].features);
    CHECK(kept[0].probs.size() == 2);
    CHECK(kept[0].probs[0] == doctest::Approx(full[0] / (1 - full[2])));
  }
}

TEST_CASE("top-beta policy defers the most conforming items") {
  std::vector<double> s;
  for (int i = 1; i <= 100; ++i) s.push_back(i / 100.0);
  const auto top = fit_top_threshold(s, 0.2);
  const auto items = lac_items(s);
  const auto d = decide_all(DeferralPolicy{top}, items);
  CHECK(std::count(d.begin(), d.end(), Decision::kDefer) == 20);
  CHECK(d[99] == Decision::kDefer);
  CHECK(d[0] == Decision::kPredict);
}

TEST_CASE("decide is pure") {
  const DeferralPolicy policy = fit_oracle_threshold(std::vector<double>{0.1, 0.5, 0.9}, 0.4);
  const auto items = lac_items({0.3, 0.7});
  for (int r = 0; r < 3; ++r) CHECK(decide_all(policy, items) == decide_all(policy, items));
}
