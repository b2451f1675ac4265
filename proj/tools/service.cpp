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

#include "service.hpp"

#include "httplib.h"
#include "json.hpp"

namespace dcp_tools {

namespace {

int http_status(dcp_status status) {
  switch (status) {
    case DCP_OK:
      return 200;
    case DCP_ERROR_NOT_FOUND:
      return 404;
    case DCP_ERROR_CONFLICT:
      return 409;
    case DCP_ERROR_INPUT:
      return 400;
    default:
      return 500;
  }
}

// Writes either the returned JSON or an {"error": ...} body. Call only after
// the C API call has filled `body`.
void respond(httplib::Response& res, dcp_status status, char* body) {
  res.status = http_status(status);
  if (status == DCP_OK) {
    res.set_content(body, "application/json");
    dcp_string_free(body);
  } else {
    res.set_content(nlohmann::json{{"error", dcp_last_error_message()}}.dump(),
                    "application/json");
  }
}

}  // namespace

SessionService::SessionService(dcp_session_store* store, std::string static_dir)
    : store_(store), server_(std::make_unique<httplib::Server>()) {
  install_routes();
  if (!static_dir.empty()) server_->set_mount_point("/", static_dir);
}

SessionService::~SessionService() {
  stop();
  dcp_session_store_free(store_);
}

void SessionService::install_routes() {
  server_->Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"status\":\"ok\"}", "application/json");
  });
  server_->Get("/session", [this](const httplib::Request&, httplib::Response& res) {
    char* body = nullptr;
    const dcp_status status = dcp_session_open(store_, &body);
    respond(res, status, body);
  });
  server_->Get("/session/:id/next",
               [this](const httplib::Request& req, httplib::Response& res) {
                 char* body = nullptr;
                 const std::string& id = req.path_params.at("id");
                 const dcp_status status = dcp_session_next(store_, id.c_str(), &body);
                 respond(res, status, body);
               });
  server_->Post("/session/:id/answer",
                [this](const httplib::Request& req, httplib::Response& res) {
                  char* body = nullptr;
                  const std::string& id = req.path_params.at("id");
                  const dcp_status status = dcp_session_answer(
                      store_, id.c_str(), req.body.c_str(), &body);
                  respond(res, status, body);
                });
  server_->Get("/session/:id/stats",
               [this](const httplib::Request& req, httplib::Response& res) {
                 char* body = nullptr;
                 const std::string& id = req.path_params.at("id");
                 const dcp_status status = dcp_session_stats(store_, id.c_str(), &body);
                 respond(res, status, body);
               });
}

int SessionService::bind_any(const std::string& host) {
  return server_->bind_to_any_port(host);
}

bool SessionService::bind(const std::string& host, int port) {
  return server_->bind_to_port(host, port);
}

bool SessionService::listen_after_bind() { return server_->listen_after_bind(); }

void SessionService::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

void SessionService::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace dcp_tools
