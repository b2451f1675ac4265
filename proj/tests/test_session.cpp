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
#include <atomic>
#include <cstdio>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "dcp/errors.hpp"
#include "dcp/io.hpp"
#include "dcp/session.hpp"
#include "json.hpp"

using namespace dcp;
using nlohmann::json;

namespace {

// 100 routed validation items from a trained deferral model.
std::string routing_fixture() {
  ExperimentConfig c;
  c.n_val = 100;
  const auto data = sample_trial_data(c, 8);
  const auto experts = make_experts(c, 8);
  auto model = std::make_shared<const MLPModel>(
      train_deferral_model(c, data.train, experts.single, 8, 0.75));
  const auto cal = calibrate_stage(c, model, data.cal, 8);
  return routing_to_json(evaluate_stage(c, model, cal, data.val, experts), 4);
}

const std::string& fixture() {
  static const std::string text = routing_fixture();
  return text;
}

std::string answer_body(std::size_t label) { return json{{"label", label}}.dump(); }

// Drives one session to completion; `choose` maps the served view and the
// routed item to a label.
template <typename Choose>
json run_session(SessionStore& store, const RoutingArtifact& art, Choose choose) {
  const std::string id = json::parse(store.open()).at("session");
  for (std::size_t i = 0; i < art.items.size(); ++i) {
    const json view = json::parse(store.next(id));
    REQUIRE(view.at("done") == false);
    CHECK(view.at("position") == i);
    store.answer(id, answer_body(choose(view.at("item"), art.items[i])));
  }
  CHECK(json::parse(store.next(id)).at("done") == true);
  return json::parse(store.stats(id));
}

}  // namespace

TEST_CASE("routing artifact parsing") {
  const auto art = RoutingArtifact::from_json(fixture());
  CHECK(art.num_classes == 4);
  CHECK(art.items.size() == 100);
  CHECK(art.label_names == std::vector<std::string>{"0", "1", "2", "3"});
  CHECK_THROWS_AS(RoutingArtifact::from_json("{}"), InputError);
  CHECK_THROWS_AS(RoutingArtifact::from_json(
                      R"({"num_classes":2,"items":[{"index":0,"features":[],"deferred":false,"set":[5],"label":0}]})"),
                  InputError);
}

TEST_CASE("oracle operator") {
  const auto art = RoutingArtifact::from_json(fixture());
  SessionStore store(art);
  const json stats = run_session(store, art, [](const json&, const RoutedItem& it) { return it.label; });
  CHECK(stats.at("team_accuracy") == 1.0);
  CHECK(stats.at("bias") == 0.0);
  CHECK(stats.at("n_items") == 100);
  std::size_t deferred = 0;
  for (const auto& it : art.items) deferred += it.deferred;
  CHECK(stats.at("n_deferred") == deferred);
  CHECK(deferred > 0);
}

TEST_CASE("first-set-element operator bias matches an offline recomputation") {
  const auto art = RoutingArtifact::from_json(fixture());
  SessionStore store(art);
  const json stats = run_session(store, art, [](const json& view, const RoutedItem&) -> std::size_t {
    return view.at("mode") == "set" ? view.at("set")[0].get<std::size_t>() : 0;
  });
  std::vector<BiasRecord> records;
  std::size_t first_wrong = 0, shown = 0;
  for (const auto& it : art.items) {
    if (it.deferred) continue;
    ++shown;
    first_wrong += it.set.front() != it.label;
    records.push_back({it.set.front(), PredictionSet{it.set}, it.label});
  }
  for (auto& r : records) std::sort(r.shown.labels.begin(), r.shown.labels.end());
  CHECK(stats.at("bias").get<double>() == bias_metric(records));
  CHECK(stats.at("bias").get<double>() == double(first_wrong) / shown);
}

TEST_CASE("served items never carry the true label") {
  const auto art = RoutingArtifact::from_json(fixture());
  SessionStore store(art);
  const std::string id = json::parse(store.open()).at("session");
  for (std::size_t i = 0; i < art.items.size(); ++i) {
    const json view = json::parse(store.next(id));
    const json& item = view.at("item");
    CHECK_FALSE(item.contains("label"));
    CHECK_FALSE(view.contains("label"));
    CHECK_FALSE(view.contains("results"));
    if (item.at("mode") == "set") {
      CHECK(item.at("set").get<std::vector<std::size_t>>() == art.items[i].set);
      CHECK(item.at("set_names").size() == art.items[i].set.size());
      CHECK_FALSE(item.contains("message"));
    } else {
      CHECK_FALSE(item.contains("set"));
      CHECK(item.contains("message"));
    }
    const json ack = json::parse(store.answer(id, answer_body(0)));
    if (i + 1 < art.items.size()) {
      CHECK_FALSE(ack.contains("results"));
      CHECK_FALSE(ack.contains("correct"));
    } else {
      REQUIRE(ack.contains("results"));
      CHECK(ack.at("results").size() == art.items.size());
    }
  }
}

TEST_CASE("protocol errors") {
  const auto art = RoutingArtifact::from_json(fixture());
  SessionStore store(art);
  const std::string id = json::parse(store.open()).at("session");
  CHECK_THROWS_AS(store.next("nope"), NotFoundError);
  CHECK_THROWS_AS(store.answer("nope", answer_body(0)), NotFoundError);
  CHECK_THROWS_AS(store.stats("nope"), NotFoundError);
  CHECK_THROWS_AS(store.answer(id, answer_body(0)), ConflictError);  // nothing pending
  store.next(id);
  CHECK_THROWS_AS(store.answer(id, "not json"), InputError);
  CHECK_THROWS_AS(store.answer(id, R"({"choice": 1})"), InputError);
  CHECK_THROWS_AS(store.answer(id, R"({"label": -1})"), InputError);
  CHECK_THROWS_AS(store.answer(id, R"({"label": 9})"), InputError);
  CHECK_NOTHROW(store.answer(id, answer_body(1)));
  CHECK_THROWS_AS(store.answer(id, answer_body(1)), ConflictError);  // twice
  CHECK_THROWS_AS(store.stats(id), ConflictError);
  // next is idempotent until answered.
  CHECK(store.next(id) == store.next(id));
}

TEST_CASE("empty artifact") {
  RoutingArtifact art;
  art.num_classes = 2;
  art.label_names = {"a", "b"};
  SessionStore store(art);
  const std::string id = json::parse(store.open()).at("session");
  CHECK(json::parse(store.next(id)).at("done") == true);
  const json stats = json::parse(store.stats(id));
  CHECK(stats.at("n_items") == 0);
  CHECK(stats.at("team_accuracy").is_null());
  CHECK(stats.at("bias").is_null());
}

TEST_CASE("concurrent sessions and the completion log") {
  const auto art = RoutingArtifact::from_json(fixture());
  const std::string log = "test_session_log.jsonl";
  std::remove(log.c_str());
  SessionStore store(art, log);
  std::atomic<int> perfect{0};
  std::vector<std::thread> workers;
  for (int w = 0; w < 8; ++w) {
    workers.emplace_back([&] {
      const std::string id = json::parse(store.open()).at("session");
      for (std::size_t i = 0; i < art.items.size(); ++i) {
        store.next(id);
        store.answer(id, answer_body(art.items[i].label));
      }
      if (json::parse(store.stats(id)).at("team_accuracy") == 1.0) ++perfect;
    });
  }
  for (auto& t : workers) t.join();
  CHECK(perfect == 8);
  const std::string text = read_file(log);
  CHECK(std::count(text.begin(), text.end(), '\n') == 8);
  std::remove(log.c_str());
}
