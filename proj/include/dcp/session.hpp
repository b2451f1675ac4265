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

#ifndef DCP_SESSION_HPP_
#define DCP_SESSION_HPP_

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dcp/types.hpp"

namespace dcp {

struct RoutedItem {
  std::size_t index = 0;
  Vector features;
  bool deferred = false;
  std::vector<std::size_t> set;  // by descending class probability
  std::size_t label = 0;         // never sent before the session completes
};

struct RoutingArtifact {
  std::size_t num_classes = 0;
  std::vector<std::string> label_names;
  std::vector<RoutedItem> items;

  static RoutingArtifact from_json(const std::string& text);
};

// Human-in-the-loop sessions over one routing artifact. Every method returns
// the JSON body of the matching HTTP endpoint and throws NotFoundError (404),
// ConflictError (409) or InputError (400) on protocol violations. Sessions
// are independent; each is mutated under its own lock.
class SessionStore {
 public:
  explicit SessionStore(RoutingArtifact artifact,
                        std::optional<std::string> log_path = std::nullopt);

  // GET /session
  std::string open();
  // GET /session/{id}/next: the pending item (the same one until answered)
  // or {"done": true}.
  std::string next(const std::string& id);
  // POST /session/{id}/answer with body {"label": k}.
  std::string answer(const std::string& id, const std::string& body);
  // GET /session/{id}/stats, only once every item is answered.
  std::string stats(const std::string& id);

  std::size_t item_count() const { return artifact_.items.size(); }

 private:
  struct Session {
    std::mutex mu;
    std::size_t cursor = 0;
    bool pending = false;
    std::vector<std::size_t> answers;
  };

  Session& find(const std::string& id);
  std::string stats_locked(const std::string& id, const Session& s) const;
  void log_completion(const std::string& id, const Session& s);

  const RoutingArtifact artifact_;
  std::optional<std::string> log_path_;
  std::mutex mu_;
  std::mutex log_mu_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
  std::size_t next_id_ = 1;
};

}  // namespace dcp

#endif  // DCP_SESSION_HPP_
