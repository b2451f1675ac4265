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

#ifndef DCP_TOOLS_SERVICE_HPP_
#define DCP_TOOLS_SERVICE_HPP_

#include <memory>
#include <string>

#include "dcp/dcp.h"

namespace httplib {
class Server;
}

namespace dcp_tools {

// JSON-over-HTTP front end for operator sessions. Talks to the library only
// through the C API; owns the session store.
//
//   GET  /healthz
//   GET  /session                 -> {"session": id, "items": n}
//   GET  /session/{id}/next       -> pending item or {"done": true}
//   POST /session/{id}/answer     <- {"label": k}
//   GET  /session/{id}/stats      (409 until the session is complete)
class SessionService {
 public:
  // Takes ownership of `store`.
  explicit SessionService(dcp_session_store* store,
                          std::string static_dir = "");
  ~SessionService();

  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  // Binds to an ephemeral port and returns it, or -1.
  int bind_any(const std::string& host);
  bool bind(const std::string& host, int port);
  // Blocks until stop() is called.
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  void install_routes();

  dcp_session_store* store_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace dcp_tools

#endif  // DCP_TOOLS_SERVICE_HPP_
