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

#include "florinet/admin_client.hpp"

namespace florinet {

std::string AdminClient::create_task(const json& spec, ByteView model) {
  const auto r = api_.post_multipart(
      "/admin/v1/tasks", {{"spec", "spec.json", spec.dump(), "application/json"},
                          {"model", "model.bin", to_string(model), "application/octet-stream"}});
  return r.at("task_id").get<std::string>();
}

std::string AdminClient::create_task(const TaskSpec& spec, const ModelVector& model) {
  return create_task(json(spec), encode_payload(model));
}

ModelVector AdminClient::model(const std::string& id, std::uint64_t version) {
  return decode_model(api_.get_bytes("/admin/v1/tasks/" + id + "/model/" + std::to_string(version)));
}

}  // namespace florinet
