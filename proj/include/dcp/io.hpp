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

#ifndef DCP_IO_HPP_
#define DCP_IO_HPP_

#include <span>
#include <string>
#include <vector>

#include "dcp/pipeline.hpp"

namespace dcp {

// Whole-file helpers; both throw IoError carrying the path.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// Datasets: header row, one column per feature (x0, x1, ...), then `label`.
std::string dataset_to_csv(std::span<const LabeledExample> data);
std::vector<LabeledExample> dataset_from_csv(const std::string& text);

// Model checkpoint: layer_sizes, row-major weights, biases, activation, seed.
std::string model_to_json(const MLPModel& model);
MLPModel model_from_json(const std::string& text);

// Calibration artifact: scorer kind and parameters, alpha, tau_cal (null for
// -infinity), n_cal, seed, plus the policy and the CP-only baseline.
std::string calibration_to_json(const CalibrationArtifact& artifact);
CalibrationArtifact calibration_from_json(const std::string& text);

// Plain-text `key = value` configuration; '#' starts a comment.
ExperimentConfig parse_config(const std::string& text);
void set_config_value(ExperimentConfig& config, const std::string& key,
                      const std::string& value);
std::string format_config(const ExperimentConfig& config);

std::string report_to_json(const TrialReport& report);

// Evaluation output: {"dcp": report, "cp_baseline": report}.
std::string eval_report_to_json(const EvalOutput& eval,
                                const CalibrationArtifact& calibration);

// Items to serve to a human operator, true labels included (server side).
// Prediction sets are listed by descending class probability.
std::string routing_to_json(const EvalOutput& eval, std::size_t num_classes);

std::string sweep_to_csv(const SweepResult& sweep);
std::string sweep_to_json(const SweepResult& sweep,
                          const ExperimentConfig& config);

std::string coverage_to_json(const CoverageTrials& trials,
                             const ExperimentConfig& config);

}  // namespace dcp

#endif  // DCP_IO_HPP_
