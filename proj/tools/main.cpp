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

// dcp: command-line front end. Every stage reads its predecessor's files and
// writes its own, so stages can be rerun independently.
//
//   dcp gen       --n 1000 --seed 1 --out train.csv
//   dcp train     --data train.csv --out model.json
//   dcp calibrate --model model.json --data cal.csv --out calibration.json
//   dcp eval      --model model.json --calibration calibration.json
//                 --data val.csv --out report.json --routing routing.json
//   dcp sweep     --out-csv sweep.csv --out-json sweep.json
//   dcp coverage  --trials 200 --alpha 0.05 --out coverage.json
//   dcp serve     --routing routing.json --port 8080
//
// Exit codes: 0 success, 1 other failure, 2 missing/unreadable file,
// 3 deferral policy emptied the calibration set.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dcp/dcp.h"
#include "service.hpp"

namespace {

struct Deleter {
  void operator()(dcp_config* p) const { dcp_config_free(p); }
  void operator()(dcp_dataset* p) const { dcp_dataset_free(p); }
  void operator()(dcp_model* p) const { dcp_model_free(p); }
  void operator()(dcp_calibration* p) const { dcp_calibration_free(p); }
  void operator()(char* p) const { dcp_string_free(p); }
};
template <typename T>
using Handle = std::unique_ptr<T, Deleter>;

// Thrown to unwind with a specific exit code after the message is printed.
struct Exit {
  int code;
};

void check(dcp_status status) {
  if (status == DCP_OK) return;
  switch (status) {
    case DCP_ERROR_IO:
      std::cerr << "error: " << dcp_last_error_message() << " (path: "
                << dcp_last_error_path() << ")\n";
      throw Exit{2};
    case DCP_ERROR_CALIBRATION:
      std::cerr << "error: " << dcp_last_error_message()
                << "; realized deferral rate " << dcp_last_error_deferral_rate()
                << "\n";
      throw Exit{3};
    default:
      std::cerr << "error: " << dcp_last_error_message() << "\n";
      throw Exit{1};
  }
}

void write_text(const std::string& path, const char* text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) {
    std::cerr << "error: cannot write '" << path << "' (path: " << path << ")\n";
    throw Exit{2};
  }
  std::fputs(text, f);
  std::fclose(f);
}

std::string read_text(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) {
    std::cerr << "error: cannot open '" << path << "' (path: " << path << ")\n";
    throw Exit{2};
  }
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) out.append(buf, n);
  std::fclose(f);
  return out;
}

// Shared by every experiment-style command: --config FILE, repeated
// --set key=value, and --seed.
struct ConfigFlags {
  std::string path;
  std::vector<std::string> overrides;
  std::vector<std::pair<std::string, std::string>> named;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", path, "key = value configuration file");
    cmd->add_option("--set", overrides, "override a config key (key=value)");
  }

  // Named flags are applied after the file and before --set.
  void put(const std::string& key, const std::string& value) {
    named.emplace_back(key, value);
  }

  Handle<dcp_config> build() const {
    dcp_config* raw = nullptr;
    check(path.empty() ? dcp_config_create(&raw) : dcp_config_load(path.c_str(), &raw));
    Handle<dcp_config> config(raw);
    for (const auto& [k, v] : named) check(dcp_config_set(config.get(), k.c_str(), v.c_str()));
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        std::cerr << "error: --set expects key=value, got '" << kv << "'\n";
        throw Exit{1};
      }
      check(dcp_config_set(config.get(), kv.substr(0, eq).c_str(),
                           kv.substr(eq + 1).c_str()));
    }
    return config;
  }
};

template <typename T>
void forward_opt(ConfigFlags& flags, const std::string& key, CLI::Option* opt,
                 const T& value) {
  if (opt->count() > 0) flags.put(key, CLI::detail::to_string(value));
}

Handle<dcp_dataset> load_dataset(const std::string& path) {
  dcp_dataset* raw = nullptr;
  check(dcp_dataset_load_csv(path.c_str(), &raw));
  return Handle<dcp_dataset>(raw);
}

Handle<dcp_model> load_model(const std::string& path) {
  dcp_model* raw = nullptr;
  check(dcp_model_load(path.c_str(), &raw));
  return Handle<dcp_model>(raw);
}

dcp_tools::SessionService* active_service = nullptr;

void on_signal(int) {
  if (active_service) active_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conformal prediction with learned deferral to experts"};
  app.require_subcommand(1);
  app.set_version_flag("--version", dcp_version());

  // gen
  std::size_t gen_n = 0;
  double gen_variance = 1.0;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "sample the 4-Gaussian mixture to CSV");
  gen->add_option("--n", gen_n, "number of examples")->required()->check(CLI::PositiveNumber);
  gen->add_option("--variance", gen_variance, "per-axis variance")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "random seed");
  gen->add_option("--out", gen_out, "output CSV")->required();

  // train
  ConfigFlags train_cfg;
  std::string train_data, train_out;
  double train_beta = 0;
  std::uint64_t train_seed = 0;
  auto* train = app.add_subcommand("train", "train the K+1-way deferral model");
  train_cfg.add(train);
  train->add_option("--data", train_data, "training CSV")->required();
  train->add_option("--out", train_out, "model checkpoint JSON")->required();
  auto* train_beta_opt = train->add_option("--beta", train_beta, "deferral penalty in [0,1]");
  auto* train_seed_opt = train->add_option("--seed", train_seed, "random seed");

  // calibrate
  ConfigFlags cal_cfg;
  std::string cal_model, cal_data, cal_out, cal_policy, cal_scorer;
  double cal_alpha = 0, cal_oracle_beta = 0;
  std::uint64_t cal_seed = 0;
  auto* calibrate = app.add_subcommand("calibrate", "prune and calibrate the threshold");
  cal_cfg.add(calibrate);
  calibrate->add_option("--model", cal_model, "model checkpoint JSON")->required();
  calibrate->add_option("--data", cal_data, "calibration CSV")->required();
  calibrate->add_option("--out", cal_out, "calibration JSON")->required();
  auto* cal_policy_opt = calibrate->add_option("--policy", cal_policy, "learned|oracle|never");
  auto* cal_scorer_opt = calibrate->add_option("--scorer", cal_scorer, "lac|aps|raps");
  auto* cal_alpha_opt = calibrate->add_option("--alpha", cal_alpha, "error tolerance");
  auto* cal_oracle_opt = calibrate->add_option("--oracle-beta", cal_oracle_beta, "oracle deferral fraction");
  auto* cal_seed_opt = calibrate->add_option("--seed", cal_seed, "random seed");

  // eval
  ConfigFlags eval_cfg;
  std::string eval_model, eval_calibration, eval_data, eval_out, eval_routing;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "route a validation set and report");
  eval_cfg.add(eval);
  eval->add_option("--model", eval_model, "model checkpoint JSON")->required();
  eval->add_option("--calibration", eval_calibration, "calibration JSON")->required();
  eval->add_option("--data", eval_data, "validation CSV")->required();
  eval->add_option("--out", eval_out, "report JSON (- for stdout)")->required();
  eval->add_option("--routing", eval_routing, "routing artifact for `serve`");
  auto* eval_seed_opt = eval->add_option("--seed", eval_seed, "random seed");

  // sweep
  ConfigFlags sweep_cfg;
  std::string sweep_csv, sweep_json;
  std::size_t sweep_trials = 0;
  std::uint64_t sweep_seed = 0;
  auto* sweep = app.add_subcommand("sweep", "set size and system accuracy vs deferral rate");
  sweep_cfg.add(sweep);
  sweep->add_option("--out-csv", sweep_csv, "sweep table CSV")->required();
  sweep->add_option("--out-json", sweep_json, "sweep JSON");
  auto* sweep_trials_opt = sweep->add_option("--trials", sweep_trials, "trials")->check(CLI::PositiveNumber);
  auto* sweep_seed_opt = sweep->add_option("--seed", sweep_seed, "master seed");

  // coverage
  ConfigFlags cov_cfg;
  std::string cov_out, cov_policy;
  std::size_t cov_trials = 200;
  double cov_alpha = 0, cov_target = 0;
  std::uint64_t cov_seed = 0;
  auto* coverage = app.add_subcommand("coverage", "coverage distribution over repeated trials");
  cov_cfg.add(coverage);
  coverage->add_option("--trials", cov_trials, "number of trials")->check(CLI::Range(2, 1000000));
  coverage->add_option("--out", cov_out, "summary JSON (- for stdout)");
  auto* cov_alpha_opt = coverage->add_option("--alpha", cov_alpha, "error tolerance");
  auto* cov_policy_opt = coverage->add_option("--policy", cov_policy, "learned|oracle|never");
  auto* cov_target_opt = coverage->add_option("--target-rate", cov_target, "deferral rate to aim for");
  auto* cov_seed_opt = coverage->add_option("--seed", cov_seed, "master seed");

  // serve
  std::string serve_routing, serve_host = "127.0.0.1", serve_static, serve_log;
  int serve_port = 8080;
  auto* serve = app.add_subcommand("serve", "serve operator sessions over HTTP");
  serve->add_option("--routing", serve_routing, "routing artifact from `eval`")->required();
  serve->add_option("--port", serve_port, "port (0 = any)");
  serve->add_option("--host", serve_host, "bind address");
  serve->add_option("--static-dir", serve_static, "directory of console assets");
  serve->add_option("--log", serve_log, "append completed sessions to this file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      dcp_dataset* raw = nullptr;
      check(dcp_dataset_sample_mog(gen_n, gen_variance, gen_seed, &raw));
      Handle<dcp_dataset> data(raw);
      check(dcp_dataset_save_csv(data.get(), gen_out.c_str()));
    } else if (train->parsed()) {
      forward_opt(train_cfg, "beta_penalty", train_beta_opt, train_beta);
      forward_opt(train_cfg, "seed", train_seed_opt, train_seed);
      auto config = train_cfg.build();
      auto data = load_dataset(train_data);
      if (dcp_dataset_size(data.get()) == 0) {
        std::cerr << "error: training set is empty\n";
        return 1;
      }
      Handle<char> text;
      {
        char* raw = nullptr;
        check(dcp_config_format(config.get(), &raw));
        text.reset(raw);
      }
      // Layer sizes: input dim, hidden sizes from the config, K+1 outputs.
      std::vector<std::size_t> sizes{dcp_dataset_dim(data.get())};
      std::uint64_t seed = 0;
      std::string s(text.get());
      std::istringstream in(s);
      std::string line;
      while (std::getline(in, line)) {
        if (line.rfind("hidden = ", 0) == 0) {
          std::istringstream parts(line.substr(9));
          std::string part;
          while (std::getline(parts, part, ',')) sizes.push_back(std::stoull(part));
        } else if (line.rfind("seed = ", 0) == 0) {
          seed = std::stoull(line.substr(7));
        }
      }
      sizes.push_back(5);
      dcp_model* raw = nullptr;
      check(dcp_model_create(sizes.data(), sizes.size(), seed, &raw));
      Handle<dcp_model> model(raw);
      double loss = 0;
      check(dcp_model_train(model.get(), data.get(), config.get(), &loss));
      check(dcp_model_save(model.get(), train_out.c_str()));
      std::cerr << "final epoch loss " << loss << "\n";
    } else if (calibrate->parsed()) {
      forward_opt(cal_cfg, "policy", cal_policy_opt, cal_policy);
      forward_opt(cal_cfg, "scorer", cal_scorer_opt, cal_scorer);
      forward_opt(cal_cfg, "alpha", cal_alpha_opt, cal_alpha);
      forward_opt(cal_cfg, "oracle_beta", cal_oracle_opt, cal_oracle_beta);
      forward_opt(cal_cfg, "seed", cal_seed_opt, cal_seed);
      auto config = cal_cfg.build();
      auto model = load_model(cal_model);
      auto data = load_dataset(cal_data);
      dcp_calibration* raw = nullptr;
      check(dcp_calibrate(model.get(), data.get(), config.get(), &raw));
      Handle<dcp_calibration> cal(raw);
      check(dcp_calibration_save(cal.get(), cal_out.c_str()));
      std::cerr << "tau_cal " << dcp_calibration_tau(cal.get()) << " on "
                << dcp_calibration_n(cal.get()) << " items (deferral rate "
                << dcp_calibration_deferral_rate(cal.get()) << ")\n";
    } else if (eval->parsed()) {
      forward_opt(eval_cfg, "seed", eval_seed_opt, eval_seed);
      auto config = eval_cfg.build();
      auto model = load_model(eval_model);
      dcp_calibration* raw_cal = nullptr;
      check(dcp_calibration_load(eval_calibration.c_str(), &raw_cal));
      Handle<dcp_calibration> cal(raw_cal);
      auto data = load_dataset(eval_data);
      char* report = nullptr;
      char* routing = nullptr;
      check(dcp_evaluate(model.get(), cal.get(), data.get(), config.get(), &report,
                         eval_routing.empty() ? nullptr : &routing));
      Handle<char> report_h(report), routing_h(routing);
      write_text(eval_out, report);
      if (routing) write_text(eval_routing, routing);
    } else if (sweep->parsed()) {
      forward_opt(sweep_cfg, "trials", sweep_trials_opt, sweep_trials);
      forward_opt(sweep_cfg, "seed", sweep_seed_opt, sweep_seed);
      auto config = sweep_cfg.build();
      char* json = nullptr;
      char* csv = nullptr;
      check(dcp_run_sweep(config.get(), &json, &csv));
      Handle<char> json_h(json), csv_h(csv);
      write_text(sweep_csv, csv);
      if (!sweep_json.empty()) write_text(sweep_json, json);
    } else if (coverage->parsed()) {
      forward_opt(cov_cfg, "alpha", cov_alpha_opt, cov_alpha);
      forward_opt(cov_cfg, "policy", cov_policy_opt, cov_policy);
      forward_opt(cov_cfg, "target_rate", cov_target_opt, cov_target);
      forward_opt(cov_cfg, "seed", cov_seed_opt, cov_seed);
      auto config = cov_cfg.build();
      char* json = nullptr;
      check(dcp_run_coverage(config.get(), cov_trials, &json));
      Handle<char> json_h(json);
      write_text(cov_out, json);
    } else if (serve->parsed()) {
      const std::string routing = read_text(serve_routing);
      dcp_session_store* store = nullptr;
      check(dcp_session_store_create(routing.c_str(), serve_log.c_str(), &store));
      dcp_tools::SessionService service(store, serve_static);
      const bool bound = serve_port == 0
                             ? (serve_port = service.bind_any(serve_host)) > 0
                             : service.bind(serve_host, serve_port);
      if (!bound) {
        std::cerr << "error: cannot bind " << serve_host << ":" << serve_port << "\n";
        return 1;
      }
      active_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "serving " << dcp_session_store_items(store) << " items on http://"
                << serve_host << ":" << serve_port << std::endl;
      service.listen_after_bind();
      active_service = nullptr;
    }
  } catch (const Exit& e) {
    return e.code;
  }
  return 0;
}
