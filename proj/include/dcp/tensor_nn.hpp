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

#ifndef DCP_TENSOR_NN_HPP_
#define DCP_TENSOR_NN_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dcp/types.hpp"

namespace dcp {

// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }

  bool operator==(const Matrix&) const = default;
};

// Feed-forward network: tanh on hidden layers, identity on the output layer.
// weights[l] maps layer l (cols) to layer l+1 (rows).
struct MLPModel {
  std::vector<std::size_t> layer_sizes;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  std::string activation = "tanh";
  std::uint64_t seed = 0;

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return weights.size(); }
  std::size_t num_parameters() const;

  // Throws ConfigError if shapes do not chain or a parameter is not finite.
  void validate() const;

  bool operator==(const MLPModel&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 60;
  double learning_rate = 0.1;
  std::size_t batch_size = 32;
  // Weight on the deferral term; larger values defer more.
  double beta_penalty = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Parameter gradients with the same layout as MLPModel.
struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  explicit Gradients(const MLPModel& model);
  void zero();
};

MLPModel mlp_init(std::span<const std::size_t> layer_sizes, std::uint64_t seed);

Vector forward(const MLPModel& model, std::span<const double> features);

// Max-subtracted softmax. Throws NumericError on non-finite logits.
ProbVector softmax(std::span<const double> logits);

// -log p_y - beta * [expert_correct] * log p_defer, where p_defer is the last
// entry of `probs`. Probabilities are clamped at 1e-12 before the log.
double deferral_loss(std::span<const double> probs, std::size_t true_label,
                     bool expert_correct, double beta);

// Loss of one example plus its gradient, accumulated into `grad` with `scale`.
double accumulate_gradient(const MLPModel& model, const LabeledExample& example,
                           bool expert_correct, double beta, double scale,
                           Gradients& grad);

// Mini-batch SGD on deferral_loss. The output layer holds K class units plus
// the deferral unit, so every label must be below output_dim - 1. Per-epoch
// mean losses are appended to `epoch_losses` when non-null.
MLPModel train(MLPModel model, std::span<const LabeledExample> data,
               const std::vector<bool>& expert_flags, const TrainConfig& config,
               std::vector<double>* epoch_losses = nullptr);

// Maximum relative error between backprop and central differences (step 1e-5)
// over all parameters. Relative error is |a - n| / max(|a|, |n|, 1e-8).
double grad_check(const MLPModel& model, const LabeledExample& example,
                  bool expert_correct, double beta);

}  // namespace dcp

#endif  // DCP_TENSOR_NN_HPP_
