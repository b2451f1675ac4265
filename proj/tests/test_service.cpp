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
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "capi_fixture.hpp"
#include "dcp/dcp.h"
#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "service.hpp"

using nlohmann::json;

namespace {

const std::string& routing() {
  static const std::string text = fixture::routing_json();
  return text;
}

// Runs the service on an ephemeral port for the lifetime of the object.
struct LiveService {
  dcp_tools::SessionService service;
  int port = -1;
  std::thread thread;

  explicit LiveService(const std::string& routing_json)
      : service(make_store(routing_json)) {
    port = service.bind_any("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this] { service.listen_after_bind(); });
    service.wait_until_ready();
  }
  ~LiveService() {
    service.stop();
    thread.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    return c;
  }

  static dcp_session_store* make_store(const std::string& routing_json) {
    dcp_session_store* store = nullptr;
    REQUIRE(dcp_session_store_create(routing_json.c_str(), nullptr, &store) == DCP_OK);
    return store;
  }
};

std::string body_for(std::size_t label) { return json{{"label", label}}.dump(); }

// Scripted operator: plays a whole session and returns the final stats.
template <typename Choose>
json play(httplib::Client& cli, Choose choose) {
  auto open = cli.Get("/session");
  REQUIRE(open);
  REQUIRE(open->status == 200);
  const std::string id = json::parse(open->body).at("session");
  const std::size_t total = json::parse(open->body).at("items");
  for (std::size_t i = 0; i < total; ++i) {
    auto next = cli.Get("/session/" + id + "/next");
    REQUIRE(next);
    REQUIRE(next->status == 200);
    const json view = json::parse(next->body);
    auto ans = cli.Post("/session/" + id + "/answer", body_for(choose(view.at("item"), i)),
                        "application/json");
    REQUIRE(ans);
    REQUIRE(ans->status == 200);
  }
  auto stats = cli.Get("/session/" + id + "/stats");
  REQUIRE(stats);
  REQUIRE(stats->status == 200);
  return json::parse(stats->body);
}

}  // namespace

TEST_CASE("health and session creation") {
  LiveService live(routing());
  auto cli = live.client();
  auto h = cli.Get("/healthz");
  REQUIRE(h);
  CHECK(h->status == 200);
  CHECK(json::parse(h->body).at("status") == "ok");
  auto a = cli.Get("/session");
  auto b = cli.Get("/session");
  REQUIRE(a);
  REQUIRE(b);
  CHECK(json::parse(a->body).at("items") == 100);
  CHECK(json::parse(a->body).at("session") != json::parse(b->body).at("session"));
}

TEST_CASE("oracle operator over HTTP") {
  const json art = json::parse(routing());
  LiveService live(routing());
  auto cli = live.client();
  const json stats = play(cli, [&](const json&, std::size_t i) {
    return art["items"][i]["label"].get<std::size_t>();
  });
  CHECK(stats.at("team_accuracy") == 1.0);
  CHECK(stats.at("bias") == 0.0);
  CHECK(stats.at("n_items") == 100);
}

TEST_CASE("first-set-element operator bias matches the artifact") {
  const json art = json::parse(routing());
  LiveService live(routing());
  auto cli = live.client();
  const json stats = play(cli, [](const json& item, std::size_t) -> std::size_t {
    return item.at("mode") == "set" ? item.at("set")[0].get<std::size_t>() : 0;
  });
  std::size_t shown = 0, wrong_first = 0;
  for (const auto& it : art.at("items")) {
    if (it.at("deferred")) continue;
    ++shown;
    wrong_first += it.at("set")[0] != it.at("label");
  }
  CHECK(stats.at("bias").get<double>() == double(wrong_first) / double(shown));
}

TEST_CASE("response schemas never expose the true label early") {
  LiveService live(routing());
  auto cli = live.client();
  const std::string id = json::parse(cli.Get("/session")->body).at("session");
  const std::set<std::string> view_keys{"session", "done", "position", "total", "label_names",
                                        "item"};
  const std::set<std::string> set_item{"index", "features", "mode", "set", "set_names"};
  const std::set<std::string> deferred_item{"index", "features", "mode", "message"};
  for (int i = 0; i < 100; ++i) {
    const json view = json::parse(cli.Get("/session/" + id + "/next")->body);
    std::set<std::string> keys;
    for (auto& [k, v] : view.items()) keys.insert(k);
    CHECK(keys == view_keys);
    std::set<std::string> ikeys;
    for (auto& [k, v] : view.at("item").items()) ikeys.insert(k);
    CHECK(ikeys == (view["item"]["mode"] == "set" ? set_item : deferred_item));
    const json ack = json::parse(
        cli.Post("/session/" + id + "/answer", body_for(1), "application/json")->body);
    CHECK(ack.contains("results") == (i == 99));
  }
  CHECK(json::parse(cli.Get("/session/" + id + "/next")->body).at("done") == true);
}

TEST_CASE("HTTP error mapping") {
  LiveService live(routing());
  auto cli = live.client();
  CHECK(cli.Get("/session/s999/next")->status == 404);
  CHECK(cli.Get("/session/s999/stats")->status == 404);
  CHECK(cli.Post("/session/s999/answer", body_for(0), "application/json")->status == 404);
  const std::string id = json::parse(cli.Get("/session")->body).at("session");
  auto early = cli.Post("/session/" + id + "/answer", body_for(0), "application/json");
  CHECK(early->status == 409);
  CHECK(json::parse(early->body).contains("error"));
  CHECK(cli.Get("/session/" + id + "/stats")->status == 409);
  cli.Get("/session/" + id + "/next");
  CHECK(cli.Post("/session/" + id + "/answer", "{oops", "application/json")->status == 400);
  CHECK(cli.Post("/session/" + id + "/answer", "{}", "application/json")->status == 400);
  CHECK(cli.Post("/session/" + id + "/answer", body_for(0), "application/json")->status == 200);
  CHECK(cli.Post("/session/" + id + "/answer", body_for(0), "application/json")->status == 409);
}

TEST_CASE("concurrent operators") {
  const json art = json::parse(routing());
  LiveService live(routing());
  std::atomic<int> perfect{0};
  std::vector<std::thread> ops;
  for (int w = 0; w < 4; ++w) {
    ops.emplace_back([&] {
      auto cli = live.client();
      const json stats = play(cli, [&](const json&, std::size_t i) {
        return art["items"][i]["label"].get<std::size_t>();
      });
      if (stats.at("team_accuracy") == 1.0) ++perfect;
    });
  }
  for (auto& t : ops) t.join();
  CHECK(perfect == 4);
}
