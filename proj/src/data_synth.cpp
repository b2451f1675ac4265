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

#include "dcp/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "dcp/errors.hpp"
#include "dcp/rng.hpp"

namespace dcp {

std::vector<LabeledExample> sample_mog(std::size_t n, double variance,
                                       std::uint64_t seed) {
  if (n == 0) throw ConfigError("sample_mog needs n >= 1");
  if (!(variance > 0.0) || !std::isfinite(variance)) {
    throw ConfigError("variance must be positive");
  }
  Engine rng = make_engine(seed, "sample_mog");
  std::uniform_int_distribution<std::size_t> pick(0, kMogClasses - 1);
  std::normal_distribution<double> noise(0.0, std::sqrt(variance));
  std::vector<LabeledExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = pick(rng);
    const double mx = (c < 2) ? 1.0 : -1.0;
    const double my = (c % 2 == 0) ? 1.0 : -1.0;
    const double x = mx + noise(rng);
    const double y = my + noise(rng);
    out.push_back({{x, y}, c});
  }
  return out;
}

double mog_bayes_accuracy(double variance) {
  const double sigma = std::sqrt(variance);
  // Phi(-1/sigma) = erfc(1 / (sigma sqrt 2)) / 2
  const double tail = 0.5 * std::erfc(1.0 / (sigma * std::sqrt(2.0)));
  return (1.0 - tail) * (1.0 - tail);
}

ExpertModel ExpertModel::uniform(double accuracy, std::size_t num_classes,
                                 std::uint64_t seed) {
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) {
    throw ConfigError("expert accuracy must lie in [0, 1]");
  }
  if (num_classes < 2) throw ConfigError("expert needs at least two classes");
  ExpertModel e;
  e.accuracy_ = accuracy;
  e.num_classes_ = num_classes;
  e.seed_ = seed;
  return e;
}

ExpertModel ExpertModel::subgroup(std::vector<double> per_class_accuracy,
                                  std::uint64_t seed) {
  if (per_class_accuracy.size() < 2) {
    throw ConfigError("subgroup profile needs at least two classes");
  }
  for (double a : per_class_accuracy) {
    if (!(a >= 0.0 && a <= 1.0)) {
      throw ConfigError("expert accuracy must lie in [0, 1]");
    }
  }
  ExpertModel e;
  e.num_classes_ = per_class_accuracy.size();
  e.profile_ = std::move(per_class_accuracy);
  e.seed_ = seed;
  return e;
}

double ExpertModel::accuracy_for(std::size_t label) const {
  return profile_.empty() ? accuracy_ : profile_.at(label);
}

std::size_t ExpertModel::predict(const LabeledExample& example,
                                 std::uint64_t draw_key) const {
  if (example.label >= num_classes_) {
    throw InputError("label " + std::to_string(example.label) +
                     " out of range for expert with K=" +
                     std::to_string(num_classes_));
  }
  const double u = counter_uniform(seed_, draw_key, 0);
  if (u < accuracy_for(example.label)) return example.label;
  const double v = counter_uniform(seed_, draw_key, 1);
  auto wrong = static_cast<std::size_t>(v * static_cast<double>(num_classes_ - 1));
  wrong = std::min(wrong, num_classes_ - 2);
  return wrong >= example.label ? wrong + 1 : wrong;
}

ExpertEnsemble ExpertEnsemble::uniform(std::size_t size, double accuracy,
                                       std::size_t num_classes,
                                       std::uint64_t seed) {
  if (size == 0) throw ConfigError("ensemble needs at least one expert");
  ExpertEnsemble ens;
  for (std::size_t i = 0; i < size; ++i) {
    ens.experts.push_back(ExpertModel::uniform(
        accuracy, num_classes, derive_seed(seed, "ensemble_member", i)));
  }
  return ens;
}

std::size_t ExpertEnsemble::predict(const LabeledExample& example,
                                    std::uint64_t draw_key) const {
  if (experts.empty()) throw InputError("ensemble is empty");
  std::vector<std::size_t> votes;
  votes.reserve(experts.size());
  for (const auto& e : experts) votes.push_back(e.predict(example, draw_key));
  return majority_vote(votes);
}

std::size_t expert_predict(const ExpertModel& expert,
                           const LabeledExample& example,
                           std::uint64_t draw_key) {
  return expert.predict(example, draw_key);
}

std::size_t majority_vote(std::span<const std::size_t> labels) {
  if (labels.empty()) throw InputError("majority_vote of an empty list");
  const std::size_t top = *std::max_element(labels.begin(), labels.end());
  std::vector<std::size_t> counts(top + 1, 0);
  for (std::size_t l : labels) ++counts[l];
  // max_element returns the first maximum, i.e. the smallest label.
  return static_cast<std::size_t>(
      std::max_element(counts.begin(), counts.end()) - counts.begin());
}

std::vector<bool> expert_correct_flags(const ExpertModel& expert,
                                       std::span<const LabeledExample> data,
                                       std::uint64_t key_base) {
  std::vector<bool> flags(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    flags[i] = expert.predict(data[i], key_base + i) == data[i].label;
  }
  return flags;
}

std::vector<bool> expert_correct_flags(const ExpertEnsemble& ensemble,
                                       std::span<const LabeledExample> data,
                                       std::uint64_t key_base) {
  std::vector<bool> flags(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    flags[i] = ensemble.predict(data[i], key_base + i) == data[i].label;
  }
  return flags;
}

}  // namespace dcp
