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

#include <array>
#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "dcp/data_synth.hpp"
#include "dcp/errors.hpp"

using namespace dcp;

namespace {

// P(at least `need` of n independent successes at rate p).
double binomial_tail(int n, int need, double p) {
  double total = 0;
  for (int k = need; k <= n; ++k) {
    double c = 1;
    for (int i = 0; i < k; ++i) c = c * (n - i) / (i + 1);
    total += c * std::pow(p, k) * std::pow(1 - p, n - k);
  }
  return total;
}

// 4-sigma band for a binomial proportion.
double band(double p, std::size_t n) { return 4 * std::sqrt(p * (1 - p) / n); }

}  // namespace

TEST_CASE("sample_mog class means and frequencies") {
  const auto data = sample_mog(100000, 1.0, 42);
  REQUIRE(data.size() == 100000);
  std::array<std::size_t, 4> count{};
  std::array<std::array<double, 2>, 4> sum{};
  for (const auto& ex : data) {
    REQUIRE(ex.label < 4);
    REQUIRE(ex.features.size() == 2);
    ++count[ex.label];
    sum[ex.label][0] += ex.features[0];
    sum[ex.label][1] += ex.features[1];
  }
  const double means[4][2] = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  for (int k = 0; k < 4; ++k) {
    CHECK(std::abs(double(count[k]) / data.size() - 0.25) <= 0.01);
    CHECK(std::abs(sum[k][0] / count[k] - means[k][0]) <= 0.02);
    CHECK(std::abs(sum[k][1] / count[k] - means[k][1]) <= 0.02);
  }
}

TEST_CASE("sample_mog variance and degenerate limit") {
  const auto data = sample_mog(40000, 2.0, 3);
  double ss = 0;
  for (const auto& ex : data) {
    const double mx = ex.label < 2 ? 1 : -1;
    const double my = ex.label % 2 == 0 ? 1 : -1;
    ss += (ex.features[0] - mx) * (ex.features[0] - mx) +
          (ex.features[1] - my) * (ex.features[1] - my);
  }
  CHECK(ss / (2 * data.size()) == doctest::Approx(2.0).epsilon(0.03));

  for (const auto& ex : sample_mog(4, 1e-12, 9)) {
    CHECK(std::abs(std::abs(ex.features[0]) - 1) < 1e-5);
    CHECK(std::abs(std::abs(ex.features[1]) - 1) < 1e-5);
  }
}

TEST_CASE("sample_mog determinism and errors") {
  const auto a = sample_mog(50, 1.0, 5);
  const auto b = sample_mog(50, 1.0, 5);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].features == b[i].features);
    CHECK(a[i].label == b[i].label);
  }
  CHECK(sample_mog(50, 1.0, 6)[0].features != a[0].features);
  CHECK_THROWS_AS(sample_mog(10, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(sample_mog(10, -1.0, 1), ConfigError);
  CHECK_THROWS(sample_mog(0, 1.0, 1));
}

TEST_CASE("mog Bayes accuracy") {
  // Phi(1) = 0.841344746..., squared.
  CHECK(mog_bayes_accuracy(1.0) == doctest::Approx(0.7078609).epsilon(1e-6));
}

TEST_CASE("expert_predict") {
  const auto data = sample_mog(10000, 1.0, 7);
  SUBCASE("perfect expert") {
    const auto e = ExpertModel::uniform(1.0, 4, 1);
    for (std::size_t i = 0; i < 500; ++i) CHECK(expert_predict(e, data[i], i) == data[i].label);
  }
  SUBCASE("accuracy 0.7") {
    const auto e = ExpertModel::uniform(0.7, 4, 2);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) hits += expert_predict(e, data[i], i) == data[i].label;
    CHECK(std::abs(double(hits) / data.size() - 0.7) <= 0.02);
  }
  SUBCASE("accuracy 0 spreads over wrong labels") {
    const auto e = ExpertModel::uniform(0.0, 4, 3);
    std::array<std::size_t, 4> offset{};
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::size_t y = expert_predict(e, data[i], i);
      REQUIRE(y != data[i].label);
      ++offset[(y + 4 - data[i].label) % 4];
    }
    for (int d = 1; d < 4; ++d)
      CHECK(std::abs(double(offset[d]) / data.size() - 1.0 / 3) <= band(1.0 / 3, data.size()));
  }
  SUBCASE("same key, same answer") {
    const auto e = ExpertModel::uniform(0.5, 4, 4);
    for (std::size_t i = 0; i < 200; ++i) CHECK(e.predict(data[i], i) == e.predict(data[i], i));
  }
}

TEST_CASE("subgroup expert matches its profile") {
  const std::vector<double> profile{0.95, 0.2, 0.6, 0.8};
  const auto e = ExpertModel::subgroup(profile, 11);
  const auto data = sample_mog(40000, 1.0, 12);
  std::array<std::size_t, 4> n{}, hits{};
  for (std::size_t i = 0; i < data.size(); ++i) {
    ++n[data[i].label];
    hits[data[i].label] += e.predict(data[i], i) == data[i].label;
  }
  for (int k = 0; k < 4; ++k) CHECK(std::abs(double(hits[k]) / n[k] - profile[k]) <= 0.03);
  CHECK_THROWS(ExpertModel::subgroup({0.5, 1.5}, 1));
  CHECK_THROWS(ExpertModel::uniform(-0.1, 4, 1));
}

TEST_CASE("majority_vote") {
  CHECK(majority_vote(std::vector<std::size_t>{2, 2, 1, 2, 0}) == 2);
  CHECK(majority_vote(std::vector<std::size_t>{0, 1}) == 0);
  CHECK(majority_vote(std::vector<std::size_t>{3, 1, 3, 1}) == 1);
  CHECK(majority_vote(std::vector<std::size_t>{7}) == 7);
  CHECK_THROWS_AS(majority_vote(std::vector<std::size_t>{}), InputError);
}

TEST_CASE("ensemble beats a single expert") {
  const auto data = sample_mog(10000, 1.0, 13);
  const auto single = ExpertModel::uniform(0.7, 4, 21);
  const auto ens = ExpertEnsemble::uniform(5, 0.7, 4, 22);
  const auto fs = expert_correct_flags(single, data);
  const auto fe = expert_correct_flags(ens, data);
  const double acc_s = std::count(fs.begin(), fs.end(), true) / double(data.size());
  const double acc_e = std::count(fe.begin(), fe.end(), true) / double(data.size());
  // A strict majority is sufficient but not necessary: the true label also
  // wins a split vote when the wrong answers scatter. Plurality value from an
  // exact enumeration of all 4^5 vote patterns, ties to the smallest label.
  const double lower = binomial_tail(5, 3, 0.7);
  constexpr double kPlurality = 0.910422;
  CHECK(lower == doctest::Approx(0.83692).epsilon(1e-5));
  CHECK(acc_e > acc_s);
  CHECK(acc_e > lower);
  CHECK(std::abs(acc_e - kPlurality) <= band(kPlurality, data.size()));
}

TEST_CASE("expert_correct_flags") {
  const auto data = sample_mog(10000, 1.0, 14);
  const auto ones = expert_correct_flags(ExpertModel::uniform(1.0, 4, 1), data);
  CHECK(std::all_of(ones.begin(), ones.end(), [](bool b) { return b; }));
  const auto zeros = expert_correct_flags(ExpertModel::uniform(0.0, 4, 1), data);
  CHECK(std::none_of(zeros.begin(), zeros.end(), [](bool b) { return b; }));
  const auto e = ExpertModel::uniform(0.7, 4, 15);
  const auto f = expert_correct_flags(e, data);
  CHECK(std::abs(std::count(f.begin(), f.end(), true) / double(data.size()) - 0.7) <= 0.02);
  for (std::size_t i = 0; i < 100; ++i) CHECK(f[i] == (e.predict(data[i], i) == data[i].label));
  // A different key base draws fresh answers.
  CHECK(expert_correct_flags(e, data, 1u << 20) != f);
}
