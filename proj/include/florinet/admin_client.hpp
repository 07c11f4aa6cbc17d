/*
 * Copyright 2026 The Florinet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FLORINET_ADMIN_CLIENT_HPP_
#define FLORINET_ADMIN_CLIENT_HPP_

#include <string>

#include "florinet/http_client.hpp"
#include "florinet/task.hpp"

namespace florinet {

/// Typed wrapper over the admin routes. Responses are returned as the raw
/// JSON documents the server sends.
class AdminClient {
 public:
  AdminClient(const std::string& endpoint, std::string admin_key,
              std::chrono::milliseconds timeout = std::chrono::seconds(60))
      : api_(endpoint, std::move(admin_key), timeout) {}

  /// Returns the new task id.
  std::string create_task(const json& spec, ByteView model);
  std::string create_task(const TaskSpec& spec, const ModelVector& model);
  json list_tasks() { return api_.get_json("/admin/v1/tasks"); }
  json task(const std::string& id) { return api_.get_json("/admin/v1/tasks/" + id); }
  json metrics(const std::string& id) { return api_.get_json("/admin/v1/tasks/" + id + "/metrics"); }
  json privacy(const std::string& id) { return api_.get_json("/admin/v1/tasks/" + id + "/privacy"); }
  /// action is pause, resume or cancel.
  json control(const std::string& id, const std::string& action) {
    return api_.post_empty("/admin/v1/tasks/" + id + "/" + action);
  }
  ModelVector model(const std::string& id, std::uint64_t version);

 private:
  ApiClient api_;
};

}  // namespace florinet

#endif  // FLORINET_ADMIN_CLIENT_HPP_
