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

#include "dcp/tensor_nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "dcp/errors.hpp"
#include "dcp/rng.hpp"

namespace dcp {

namespace {

constexpr double kLogClamp = 1e-12;

// Activations of every layer for one input; acts[0] is the input itself.
std::vector<Vector> forward_all(const MLPModel& model,
                                std::span<const double> features) {
  std::vector<Vector> acts;
  acts.reserve(model.num_layers() + 1);
  acts.emplace_back(features.begin(), features.end());
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const Matrix& w = model.weights[l];
    const Vector& in = acts.back();
    Vector out(model.biases[l]);
    for (std::size_t r = 0; r < w.rows; ++r) {
      const double* row = &w.data[r * w.cols];
      double acc = 0.0;
      for (std::size_t c = 0; c < w.cols; ++c) acc += row[c] * in[c];
      out[r] += acc;
    }
    if (l + 1 < model.num_layers()) {
      for (double& v : out) v = std::tanh(v);
    }
    acts.push_back(std::move(out));
  }
  return acts;
}

void check_features(const MLPModel& model, std::span<const double> features) {
  if (features.size() != model.input_dim()) {
    throw InputError("feature length " + std::to_string(features.size()) +
                     " does not match model input dim " +
                     std::to_string(model.input_dim()));
  }
}

}  // namespace

std::size_t MLPModel::num_parameters() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    n += weights[l].data.size() + biases[l].size();
  }
  return n;
}

void MLPModel::validate() const {
  if (layer_sizes.size() < 2) throw ConfigError("model needs at least two layers");
  if (weights.size() != layer_sizes.size() - 1 ||
      biases.size() != layer_sizes.size() - 1) {
    throw ConfigError("parameter count does not match layer_sizes");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const Matrix& w = weights[l];
    if (w.rows != layer_sizes[l + 1] || w.cols != layer_sizes[l] ||
        w.data.size() != w.rows * w.cols || biases[l].size() != w.rows) {
      throw ConfigError("layer " + std::to_string(l) +
                        " shape does not chain with layer_sizes");
    }
    auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(w.data.begin(), w.data.end(), finite) ||
        !std::all_of(biases[l].begin(), biases[l].end(), finite)) {
      throw ConfigError("non-finite parameter in layer " + std::to_string(l));
    }
  }
  if (activation != "tanh") {
    throw ConfigError("unsupported activation '" + activation + "'");
  }
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(beta_penalty >= 0.0 && beta_penalty <= 1.0)) {
    throw ConfigError("beta_penalty must lie in [0, 1]");
  }
}

Gradients::Gradients(const MLPModel& model) {
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    weights.emplace_back(model.weights[l].rows, model.weights[l].cols);
    biases.emplace_back(model.biases[l].size(), 0.0);
  }
}

void Gradients::zero() {
  for (auto& w : weights) std::fill(w.data.begin(), w.data.end(), 0.0);
  for (auto& b : biases) std::fill(b.begin(), b.end(), 0.0);
}

MLPModel mlp_init(std::span<const std::size_t> layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2) {
    throw ConfigError("layer_sizes needs an input and an output layer");
  }
  if (std::any_of(layer_sizes.begin(), layer_sizes.end(),
                  [](std::size_t s) { return s == 0; })) {
    throw ConfigError("layer sizes must be positive");
  }
  MLPModel model;
  model.layer_sizes.assign(layer_sizes.begin(), layer_sizes.end());
  model.seed = seed;
  Engine rng = make_engine(seed, "mlp_init");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const std::size_t fan_in = layer_sizes[l];
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix w(layer_sizes[l + 1], fan_in);
    for (double& v : w.data) v = scale * normal(rng);
    model.weights.push_back(std::move(w));
    model.biases.emplace_back(layer_sizes[l + 1], 0.0);
  }
  return model;
}

Vector forward(const MLPModel& model, std::span<const double> features) {
  check_features(model, features);
  return std::move(forward_all(model, features).back());
}

ProbVector softmax(std::span<const double> logits) {
  if (logits.empty()) throw InputError("softmax of an empty vector");
  if (!std::all_of(logits.begin(), logits.end(),
                   [](double v) { return std::isfinite(v); })) {
    throw NumericError("softmax input contains non-finite values");
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  ProbVector out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

double deferral_loss(std::span<const double> probs, std::size_t true_label,
                     bool expert_correct, double beta) {
  if (probs.size() < 2) throw InputError("probs needs K+1 >= 2 entries");
  if (true_label + 1 >= probs.size()) {
    throw InputError("true_label " + std::to_string(true_label) +
                     " out of range for K=" + std::to_string(probs.size() - 1));
  }
  double loss = -std::log(std::max(probs[true_label], kLogClamp));
  if (expert_correct) {
    loss -= beta * std::log(std::max(probs.back(), kLogClamp));
  }
  return loss;
}

double accumulate_gradient(const MLPModel& model, const LabeledExample& example,
                           bool expert_correct, double beta, double scale,
                           Gradients& grad) {
  check_features(model, example.features);
  std::vector<Vector> acts = forward_all(model, example.features);
  const ProbVector probs = softmax(acts.back());
  const double loss =
      deferral_loss(probs, example.label, expert_correct, beta);

  // d loss / d logits. A clamped log contributes no gradient.
  const std::size_t defer_slot = probs.size() - 1;
  const double w_label = probs[example.label] > kLogClamp ? 1.0 : 0.0;
  const double w_defer =
      (expert_correct && probs[defer_slot] > kLogClamp) ? beta : 0.0;
  Vector delta(probs.size());
  for (std::size_t j = 0; j < probs.size(); ++j) {
    delta[j] = (w_label + w_defer) * probs[j];
  }
  delta[example.label] -= w_label;
  delta[defer_slot] -= w_defer;

  for (std::size_t l = model.num_layers(); l-- > 0;) {
    const Vector& in = acts[l];
    Matrix& gw = grad.weights[l];
    Vector& gb = grad.biases[l];
    for (std::size_t r = 0; r < gw.rows; ++r) {
      const double d = scale * delta[r];
      gb[r] += d;
      double* row = &gw.data[r * gw.cols];
      for (std::size_t c = 0; c < gw.cols; ++c) row[c] += d * in[c];
    }
    if (l == 0) break;
    const Matrix& w = model.weights[l];
    Vector back(w.cols, 0.0);
    for (std::size_t r = 0; r < w.rows; ++r) {
      const double* row = &w.data[r * w.cols];
      for (std::size_t c = 0; c < w.cols; ++c) back[c] += row[c] * delta[r];
    }
    for (std::size_t c = 0; c < back.size(); ++c) {
      back[c] *= 1.0 - in[c] * in[c];  // tanh'
    }
    delta = std::move(back);
  }
  return loss;
}

MLPModel train(MLPModel model, std::span<const LabeledExample> data,
               const std::vector<bool>& expert_flags, const TrainConfig& config,
               std::vector<double>* epoch_losses) {
  config.validate();
  model.validate();
  if (data.empty()) throw InputError("training set is empty");
  if (expert_flags.size() != data.size()) {
    throw InputError("expert_flags length does not match the dataset");
  }
  if (model.output_dim() < 2) {
    throw ConfigError("output layer must have K+1 >= 2 units");
  }
  const std::size_t num_classes = model.output_dim() - 1;
  for (const auto& ex : data) {
    if (ex.label >= num_classes) {
      throw ConfigError("output dim " + std::to_string(model.output_dim()) +
                        " is not K+1 for label " + std::to_string(ex.label));
    }
  }

  Engine rng = make_engine(config.seed, "train_shuffle");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Gradients grad(model);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(stop - start);
      grad.zero();
      for (std::size_t i = start; i < stop; ++i) {
        const std::size_t idx = order[i];
        epoch_loss += accumulate_gradient(model, data[idx], expert_flags[idx],
                                          config.beta_penalty, scale, grad);
      }
      for (std::size_t l = 0; l < model.num_layers(); ++l) {
        auto& w = model.weights[l].data;
        const auto& gw = grad.weights[l].data;
        for (std::size_t k = 0; k < w.size(); ++k) {
          w[k] -= config.learning_rate * gw[k];
        }
        auto& b = model.biases[l];
        for (std::size_t k = 0; k < b.size(); ++k) {
          b[k] -= config.learning_rate * grad.biases[l][k];
        }
      }
    }
    if (epoch_losses) {
      epoch_losses->push_back(epoch_loss / static_cast<double>(data.size()));
    }
  }
  return model;
}

double grad_check(const MLPModel& model, const LabeledExample& example,
                  bool expert_correct, double beta) {
  constexpr double kStep = 1e-5;
  Gradients analytic(model);
  accumulate_gradient(model, example, expert_correct, beta, 1.0, analytic);

  MLPModel probe = model;
  auto loss_at = [&]() {
    return deferral_loss(softmax(forward(probe, example.features)),
                         example.label, expert_correct, beta);
  };
  auto rel_err = [](double a, double n) {
    const double denom = std::max({std::abs(a), std::abs(n), 1e-8});
    return std::abs(a - n) / denom;
  };
  auto central = [&](double& param) {
    const double saved = param;
    param = saved + kStep;
    const double up = loss_at();
    param = saved - kStep;
    const double down = loss_at();
    param = saved;
    return (up - down) / (2.0 * kStep);
  };

  double worst = 0.0;
  for (std::size_t l = 0; l < probe.num_layers(); ++l) {
    for (std::size_t k = 0; k < probe.weights[l].data.size(); ++k) {
      worst = std::max(worst, rel_err(analytic.weights[l].data[k],
                                       central(probe.weights[l].data[k])));
    }
    for (std::size_t k = 0; k < probe.biases[l].size(); ++k) {
      worst = std::max(worst, rel_err(analytic.biases[l][k],
                                       central(probe.biases[l][k])));
    }
  }
  return worst;
}

}  // namespace dcp
