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

#ifndef DCP_DATA_SYNTH_HPP_
#define DCP_DATA_SYNTH_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dcp/types.hpp"

namespace dcp {

inline constexpr std::size_t kMogClasses = 4;

// Class c is centered at (+-1, +-1): 0 -> (1,1), 1 -> (1,-1), 2 -> (-1,1),
// 3 -> (-1,-1).
std::vector<LabeledExample> sample_mog(std::size_t n, double variance,
                                       std::uint64_t seed);

// Bayes-optimal accuracy of the unit-mean mixture with isotropic `variance`:
// (1 - Phi(-1/sigma))^2.
double mog_bayes_accuracy(double variance);

// Simulated annotator. Correct with probability accuracy(label); otherwise
// answers a uniformly random wrong label. Answers are a pure function of
// (seed, draw_key).
class ExpertModel {
 public:
  static ExpertModel uniform(double accuracy, std::size_t num_classes,
                             std::uint64_t seed);
  // Per-class accuracies; the profile length fixes K.
  static ExpertModel subgroup(std::vector<double> per_class_accuracy,
                              std::uint64_t seed);

  double accuracy_for(std::size_t label) const;
  std::size_t num_classes() const { return num_classes_; }
  std::uint64_t seed() const { return seed_; }
  bool is_uniform() const { return profile_.empty(); }

  std::size_t predict(const LabeledExample& example,
                      std::uint64_t draw_key) const;

 private:
  ExpertModel() = default;

  double accuracy_ = 1.0;
  std::vector<double> profile_;
  std::size_t num_classes_ = 0;
  std::uint64_t seed_ = 0;
};

struct ExpertEnsemble {
  std::vector<ExpertModel> experts;

  // `size` independent uniform experts with seeds derived from `seed`.
  static ExpertEnsemble uniform(std::size_t size, double accuracy,
                                std::size_t num_classes, std::uint64_t seed);
  std::size_t predict(const LabeledExample& example,
                      std::uint64_t draw_key) const;
};

std::size_t expert_predict(const ExpertModel& expert,
                           const LabeledExample& example,
                           std::uint64_t draw_key);

// Most frequent label; ties go to the smallest index.
std::size_t majority_vote(std::span<const std::size_t> labels);

// flags[i] = expert answer on data[i] equals data[i].label, using draw key
// key_base + i.
std::vector<bool> expert_correct_flags(const ExpertModel& expert,
                                       std::span<const LabeledExample> data,
                                       std::uint64_t key_base = 0);
std::vector<bool> expert_correct_flags(const ExpertEnsemble& ensemble,
                                       std::span<const LabeledExample> data,
                                       std::uint64_t key_base = 0);

}  // namespace dcp

#endif  // DCP_DATA_SYNTH_HPP_
