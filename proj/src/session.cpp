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

#include "dcp/session.hpp"

#include <algorithm>
#include <fstream>

#include "dcp/errors.hpp"
#include "dcp/pipeline.hpp"
#include "json.hpp"

namespace dcp {

using nlohmann::json;

namespace {

json rate_or_null(std::size_t num, std::size_t den) {
  return den == 0 ? json(nullptr)
                  : json(static_cast<double>(num) / static_cast<double>(den));
}

}  // namespace

RoutingArtifact RoutingArtifact::from_json(const std::string& text) {
  RoutingArtifact a;
  try {
    const json j = json::parse(text);
    a.num_classes = j.at("num_classes").get<std::size_t>();
    if (j.contains("label_names")) {
      a.label_names = j.at("label_names").get<std::vector<std::string>>();
    }
    if (a.label_names.empty()) {
      for (std::size_t k = 0; k < a.num_classes; ++k) {
        a.label_names.push_back(std::to_string(k));
      }
    }
    for (const auto& it : j.at("items")) {
      RoutedItem item;
      item.index = it.at("index").get<std::size_t>();
      item.features = it.at("features").get<Vector>();
      item.deferred = it.at("deferred").get<bool>();
      item.set = it.at("set").get<std::vector<std::size_t>>();
      item.label = it.at("label").get<std::size_t>();
      a.items.push_back(std::move(item));
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed routing artifact: ") + e.what());
  }
  if (a.label_names.size() != a.num_classes) {
    throw InputError("label_names does not have num_classes entries");
  }
  for (const auto& item : a.items) {
    if (item.label >= a.num_classes) throw InputError("item label out of range");
    for (std::size_t y : item.set) {
      if (y >= a.num_classes) throw InputError("set label out of range");
    }
  }
  return a;
}

SessionStore::SessionStore(RoutingArtifact artifact,
                           std::optional<std::string> log_path)
    : artifact_(std::move(artifact)), log_path_(std::move(log_path)) {}

SessionStore::Session& SessionStore::find(const std::string& id) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown session '" + id + "'");
  return *it->second;
}

std::string SessionStore::open() {
  std::lock_guard lock(mu_);
  const std::string id = "s" + std::to_string(next_id_++);
  sessions_.emplace(id, std::make_unique<Session>());
  return json{{"session", id}, {"items", artifact_.items.size()}}.dump();
}

std::string SessionStore::next(const std::string& id) {
  Session& s = find(id);
  std::lock_guard lock(s.mu);
  const std::size_t total = artifact_.items.size();
  if (s.cursor >= total) {
    return json{{"session", id}, {"done", true}, {"total", total}}.dump();
  }
  s.pending = true;
  const RoutedItem& item = artifact_.items[s.cursor];
  json view{{"index", item.index}, {"features", item.features}};
  if (item.deferred) {
    view["mode"] = "deferred";
    view["message"] = "model deferred: your call";
  } else {
    view["mode"] = "set";
    view["set"] = item.set;
    json names = json::array();
    for (std::size_t y : item.set) names.push_back(artifact_.label_names[y]);
    view["set_names"] = names;
  }
  return json{{"session", id},
              {"done", false},
              {"position", s.cursor},
              {"total", total},
              {"label_names", artifact_.label_names},
              {"item", view}}
      .dump();
}

std::string SessionStore::answer(const std::string& id, const std::string& body) {
  Session& s = find(id);
  std::size_t label = 0;
  try {
    const json j = json::parse(body);
    if (!j.is_object() || !j.contains("label") || !j["label"].is_number_unsigned()) {
      throw InputError("answer body must be {\"label\": <class index>}");
    }
    label = j["label"].get<std::size_t>();
  } catch (const json::exception&) {
    throw InputError("answer body is not valid JSON");
  }
  if (label >= artifact_.num_classes) {
    throw InputError("label " + std::to_string(label) + " out of range");
  }

  std::lock_guard lock(s.mu);
  if (!s.pending) throw ConflictError("no pending item; call next first");
  s.answers.push_back(label);
  s.pending = false;
  ++s.cursor;
  const std::size_t total = artifact_.items.size();
  json out{{"session", id},
           {"accepted", true},
           {"position", s.cursor},
           {"remaining", total - s.cursor},
           {"complete", s.cursor == total}};
  if (s.cursor == total) {
    // Feedback is only released once the whole queue is answered.
    json results = json::array();
    for (std::size_t i = 0; i < total; ++i) {
      const RoutedItem& item = artifact_.items[i];
      results.push_back({{"index", item.index},
                         {"answer", s.answers[i]},
                         {"label", item.label},
                         {"correct", s.answers[i] == item.label}});
    }
    out["results"] = results;
    log_completion(id, s);
  }
  return out.dump();
}

std::string SessionStore::stats(const std::string& id) {
  Session& s = find(id);
  std::lock_guard lock(s.mu);
  if (s.cursor < artifact_.items.size()) {
    throw ConflictError("session in progress");
  }
  return stats_locked(id, s);
}

std::string SessionStore::stats_locked(const std::string& id,
                                       const Session& s) const {
  std::size_t correct = 0, deferred = 0, deferred_correct = 0;
  std::size_t shown_total = 0;
  std::vector<BiasRecord> records;
  for (std::size_t i = 0; i < artifact_.items.size(); ++i) {
    const RoutedItem& item = artifact_.items[i];
    const bool ok = s.answers[i] == item.label;
    correct += ok ? 1 : 0;
    if (item.deferred) {
      ++deferred;
      deferred_correct += ok ? 1 : 0;
      continue;
    }
    PredictionSet shown{item.set};
    std::sort(shown.labels.begin(), shown.labels.end());
    shown_total += shown.size();
    records.push_back({s.answers[i], std::move(shown), item.label});
  }
  const std::size_t n = artifact_.items.size();
  const std::size_t non_deferred = n - deferred;
  const std::size_t non_deferred_correct = correct - deferred_correct;
  json bias = records.empty() ? json(nullptr) : json(bias_metric(records));
  return json{{"session", id},
              {"n_items", n},
              {"n_deferred", deferred},
              {"n_non_deferred", non_deferred},
              {"team_accuracy", rate_or_null(correct, n)},
              {"accuracy_deferred", rate_or_null(deferred_correct, deferred)},
              {"accuracy_non_deferred",
               rate_or_null(non_deferred_correct, non_deferred)},
              {"bias", bias},
              {"mean_set_size", rate_or_null(shown_total, non_deferred)}}
      .dump();
}

void SessionStore::log_completion(const std::string& id, const Session& s) {
  if (!log_path_) return;
  std::lock_guard lock(log_mu_);
  std::ofstream out(*log_path_, std::ios::app);
  if (!out) return;
  out << json{{"session", id}, {"answers", s.answers}}.dump() << '\n';
}

}  // namespace dcp
