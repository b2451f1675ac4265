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

#include "dcp/dcp.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <optional>
#include <limits>
#include <memory>
#include <new>
#include <string>

#include "dcp/errors.hpp"
#include "dcp/io.hpp"
#include "dcp/pipeline.hpp"
#include "dcp/rng.hpp"
#include "dcp/session.hpp"

struct dcp_config {
  dcp::ExperimentConfig value;
};
struct dcp_dataset {
  std::vector<dcp::LabeledExample> examples;
};
struct dcp_model {
  dcp::MLPModel value;
};
struct dcp_calibration {
  dcp::CalibrationArtifact value;
};
struct dcp_session_store {
  std::unique_ptr<dcp::SessionStore> store;
};

namespace {

struct LastError {
  std::string message;
  std::string path;
  double deferral_rate = std::numeric_limits<double>::quiet_NaN();
};

thread_local LastError last_error;

dcp_status fail(dcp_status status, const std::string& message) {
  last_error.message = message;
  return status;
}

// Runs `fn`, translating exceptions into status codes.
template <typename Fn>
dcp_status guarded(Fn&& fn) {
  last_error = LastError{};
  try {
    fn();
    return DCP_OK;
  } catch (const dcp::CalibrationError& e) {
    last_error.deferral_rate = e.realized_deferral_rate();
    return fail(DCP_ERROR_CALIBRATION, e.what());
  } catch (const dcp::IoError& e) {
    last_error.path = e.path();
    return fail(DCP_ERROR_IO, e.what());
  } catch (const dcp::ConfigError& e) {
    return fail(DCP_ERROR_CONFIG, e.what());
  } catch (const dcp::InputError& e) {
    return fail(DCP_ERROR_INPUT, e.what());
  } catch (const dcp::NumericError& e) {
    return fail(DCP_ERROR_NUMERIC, e.what());
  } catch (const dcp::NotFoundError& e) {
    return fail(DCP_ERROR_NOT_FOUND, e.what());
  } catch (const dcp::ConflictError& e) {
    return fail(DCP_ERROR_CONFLICT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(DCP_ERROR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(DCP_ERROR_INTERNAL, e.what());
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw dcp::InputError(std::string(what) + " is null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

void emit(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

}  // namespace

extern "C" {

const char* dcp_version(void) { return "0.1.0"; }
const char* dcp_last_error_message(void) { return last_error.message.c_str(); }
double dcp_last_error_deferral_rate(void) { return last_error.deferral_rate; }
const char* dcp_last_error_path(void) { return last_error.path.c_str(); }
void dcp_string_free(char* s) { std::free(s); }

dcp_status dcp_config_create(dcp_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new dcp_config{};
  });
}

dcp_status dcp_config_parse(const char* text, dcp_config** out) {
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    *out = new dcp_config{dcp::parse_config(text)};
  });
}

dcp_status dcp_config_load(const char* path, dcp_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new dcp_config{dcp::parse_config(dcp::read_file(path))};
  });
}

dcp_status dcp_config_set(dcp_config* config, const char* key,
                          const char* value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    dcp::ExperimentConfig updated = config->value;
    dcp::set_config_value(updated, key, value);
    updated.validate();
    config->value = std::move(updated);
  });
}

dcp_status dcp_config_format(const dcp_config* config, char** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    emit(out, dcp::format_config(config->value));
  });
}

void dcp_config_free(dcp_config* config) { delete config; }

dcp_status dcp_dataset_sample_mog(size_t n, double variance, uint64_t seed,
                                  dcp_dataset** out) {
  return guarded([&] {
    require(out, "out");
    *out = new dcp_dataset{dcp::sample_mog(n, variance, seed)};
  });
}

dcp_status dcp_dataset_load_csv(const char* path, dcp_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new dcp_dataset{dcp::dataset_from_csv(dcp::read_file(path))};
  });
}

dcp_status dcp_dataset_save_csv(const dcp_dataset* data, const char* path) {
  return guarded([&] {
    require(data, "data");
    require(path, "path");
    dcp::write_file(path, dcp::dataset_to_csv(data->examples));
  });
}

size_t dcp_dataset_size(const dcp_dataset* data) {
  return data ? data->examples.size() : 0;
}

size_t dcp_dataset_dim(const dcp_dataset* data) {
  return (data && !data->examples.empty()) ? data->examples[0].features.size()
                                           : 0;
}

dcp_status dcp_dataset_example(const dcp_dataset* data, size_t index,
                               double* features, size_t capacity,
                               size_t* label) {
  return guarded([&] {
    require(data, "data");
    if (index >= data->examples.size()) throw dcp::InputError("index out of range");
    const auto& ex = data->examples[index];
    if (features) {
      if (capacity < ex.features.size()) throw dcp::InputError("buffer too small");
      std::copy(ex.features.begin(), ex.features.end(), features);
    }
    if (label) *label = ex.label;
  });
}

void dcp_dataset_free(dcp_dataset* data) { delete data; }

dcp_status dcp_model_create(const size_t* layer_sizes, size_t count,
                            uint64_t seed, dcp_model** out) {
  return guarded([&] {
    require(out, "out");
    if (count > 0) require(layer_sizes, "layer_sizes");
    const std::vector<std::size_t> sizes(layer_sizes, layer_sizes + count);
    *out = new dcp_model{dcp::mlp_init(sizes, seed)};
  });
}

dcp_status dcp_model_train(dcp_model* model, const dcp_dataset* data,
                           const dcp_config* config, double* final_loss) {
  return guarded([&] {
    require(model, "model");
    require(data, "data");
    require(config, "config");
    const dcp::ExperimentConfig& c = config->value;
    c.validate();
    const dcp::TrialExperts experts = dcp::make_experts(c, c.seed);
    const std::vector<bool> flags = dcp::expert_correct_flags(
        experts.single, data->examples, dcp::kTrainKeyBase);
    dcp::TrainConfig tc = c.train;
    tc.seed = dcp::derive_seed(c.seed, "train_shuffle");
    std::vector<double> losses;
    model->value = dcp::train(model->value, data->examples, flags, tc, &losses);
    if (final_loss) *final_loss = losses.back();
  });
}

dcp_status dcp_model_forward(const dcp_model* model, const double* features,
                             size_t dim, double* logits, size_t capacity) {
  return guarded([&] {
    require(model, "model");
    require(features, "features");
    require(logits, "logits");
    const dcp::Vector out =
        dcp::forward(model->value, std::span<const double>(features, dim));
    if (capacity < out.size()) throw dcp::InputError("logits buffer too small");
    std::copy(out.begin(), out.end(), logits);
  });
}

size_t dcp_model_output_dim(const dcp_model* model) {
  return model ? model->value.output_dim() : 0;
}

dcp_status dcp_model_load(const char* path, dcp_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new dcp_model{dcp::model_from_json(dcp::read_file(path))};
  });
}

dcp_status dcp_model_save(const dcp_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    dcp::write_file(path, dcp::model_to_json(model->value));
  });
}

void dcp_model_free(dcp_model* model) { delete model; }

dcp_status dcp_calibrate(const dcp_model* model, const dcp_dataset* cal,
                         const dcp_config* config, dcp_calibration** out) {
  return guarded([&] {
    require(model, "model");
    require(cal, "cal");
    require(config, "config");
    require(out, "out");
    auto shared = std::make_shared<const dcp::MLPModel>(model->value);
    *out = new dcp_calibration{dcp::calibrate_stage(
        config->value, std::move(shared), cal->examples, config->value.seed)};
  });
}

double dcp_calibration_tau(const dcp_calibration* c) {
  return c ? c->value.result.tau_cal : std::numeric_limits<double>::quiet_NaN();
}

double dcp_calibration_baseline_tau(const dcp_calibration* c) {
  return c ? c->value.baseline.tau_cal : std::numeric_limits<double>::quiet_NaN();
}

size_t dcp_calibration_n(const dcp_calibration* c) {
  return c ? c->value.result.n_cal : 0;
}

double dcp_calibration_deferral_rate(const dcp_calibration* c) {
  return c ? c->value.cal_deferral_rate : std::numeric_limits<double>::quiet_NaN();
}

dcp_status dcp_calibration_load(const char* path, dcp_calibration** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new dcp_calibration{dcp::calibration_from_json(dcp::read_file(path))};
  });
}

dcp_status dcp_calibration_save(const dcp_calibration* c, const char* path) {
  return guarded([&] {
    require(c, "calibration");
    require(path, "path");
    dcp::write_file(path, dcp::calibration_to_json(c->value));
  });
}

void dcp_calibration_free(dcp_calibration* c) { delete c; }

dcp_status dcp_evaluate(const dcp_model* model, const dcp_calibration* calibration,
                        const dcp_dataset* val, const dcp_config* config,
                        char** report_json, char** routing_json) {
  return guarded([&] {
    require(model, "model");
    require(calibration, "calibration");
    require(val, "val");
    require(config, "config");
    const dcp::ExperimentConfig& c = config->value;
    c.validate();
    auto shared = std::make_shared<const dcp::MLPModel>(model->value);
    const dcp::EvalOutput eval =
        dcp::evaluate_stage(c, std::move(shared), calibration->value,
                            val->examples, dcp::make_experts(c, c.seed));
    const std::string report = dcp::eval_report_to_json(eval, calibration->value);
    const std::string routing = dcp::routing_to_json(eval, c.num_classes);
    emit(report_json, report);
    emit(routing_json, routing);
  });
}

dcp_status dcp_run_sweep(const dcp_config* config, char** json, char** csv) {
  return guarded([&] {
    require(config, "config");
    const dcp::SweepResult sweep = dcp::run_sweep(config->value);
    const std::string j = dcp::sweep_to_json(sweep, config->value);
    const std::string c = dcp::sweep_to_csv(sweep);
    emit(json, j);
    emit(csv, c);
  });
}

dcp_status dcp_run_coverage(const dcp_config* config, size_t trials,
                            char** json) {
  return guarded([&] {
    require(config, "config");
    require(json, "json");
    const dcp::CoverageTrials t = dcp::coverage_trials(config->value, trials);
    emit(json, dcp::coverage_to_json(t, config->value));
  });
}

dcp_status dcp_session_store_create(const char* routing_json,
                                    const char* log_path,
                                    dcp_session_store** out) {
  return guarded([&] {
    require(routing_json, "routing_json");
    require(out, "out");
    std::optional<std::string> log;
    if (log_path && *log_path) log = log_path;
    *out = new dcp_session_store{std::make_unique<dcp::SessionStore>(
        dcp::RoutingArtifact::from_json(routing_json), std::move(log))};
  });
}

size_t dcp_session_store_items(const dcp_session_store* store) {
  return store ? store->store->item_count() : 0;
}

dcp_status dcp_session_open(dcp_session_store* store, char** json) {
  return guarded([&] {
    require(store, "store");
    require(json, "json");
    emit(json, store->store->open());
  });
}

dcp_status dcp_session_next(dcp_session_store* store, const char* id,
                            char** json) {
  return guarded([&] {
    require(store, "store");
    require(id, "id");
    require(json, "json");
    emit(json, store->store->next(id));
  });
}

dcp_status dcp_session_answer(dcp_session_store* store, const char* id,
                              const char* body, char** json) {
  return guarded([&] {
    require(store, "store");
    require(id, "id");
    require(body, "body");
    require(json, "json");
    emit(json, store->store->answer(id, body));
  });
}

dcp_status dcp_session_stats(dcp_session_store* store, const char* id,
                             char** json) {
  return guarded([&] {
    require(store, "store");
    require(id, "id");
    require(json, "json");
    emit(json, store->store->stats(id));
  });
}

void dcp_session_store_free(dcp_session_store* store) { delete store; }

}  // extern "C"
