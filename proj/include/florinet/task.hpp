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

#ifndef FLORINET_TASK_HPP_
#define FLORINET_TASK_HPP_

#include <chrono>
#include <cstdint>
#include <json.hpp>
#include <map>
#include <optional>
#include <string>

#include "florinet/aggregation.hpp"
#include "florinet/codec.hpp"
#include "florinet/privacy.hpp"

namespace florinet {

using nlohmann::json;

enum class TaskMode { kSync, kAsync };

std::string to_string(TaskMode m);

struct Timeouts {
  std::chrono::milliseconds registration{60000};
  std::chrono::milliseconds key_exchange{30000};
  std::chrono::milliseconds upload{300000};
  bool operator==(const Timeouts&) const = default;
};

struct SecAggConfig {
  bool enabled = false;
  double clip_range = 1.0;  // r
  int bits = 16;            // B
  bool operator==(const SecAggConfig&) const = default;
};

/// One selection criterion over a client metadata value.
///
/// JSON form: a bare string means equality; otherwise an object with a single
/// operator key among eq, ne, in, gt, gte, lt, lte, exists. Ordering
/// operators compare numerically when both sides parse as numbers and
/// lexicographically otherwise.
struct Predicate {
  std::string op = "eq";
  json operand;

  bool matches(const std::optional<std::string>& value) const;
  bool operator==(const Predicate&) const = default;
};

using SelectionCriteria = std::map<std::string, Predicate>;

struct TaskSpec {
  std::string task_name;
  std::string app_name;
  std::string workflow_name;
  std::uint64_t clients_per_round = 1;
  std::uint64_t total_rounds = 1;
  TaskMode mode = TaskMode::kSync;
  std::uint64_t async_buffer_size = 0;  // K
  std::uint64_t vg_size = 8;            // g
  SecAggConfig secagg;
  privacy::DpConfig dp;
  aggregation::AggregationStrategy strategy;
  SelectionCriteria selection_criteria;
  Timeouts timeouts;
  std::uint64_t eval_interval = 1;
  double over_provision = 1.2;
  std::uint32_t retry_limit = 3;
  std::optional<std::uint64_t> seed;
  std::string attestation = "none";
  bool staleness_discount = false;

  /// Throws Error("invalid_spec") naming the first violated constraint.
  void validate() const;
  QuantParams quant_params() const;
  /// ceil(over_provision * clients_per_round) for sync, clients_per_round for async.
  std::uint64_t registration_target() const;
  bool operator==(const TaskSpec&) const = default;
};

void to_json(json& j, const TaskSpec& s);
void from_json(const json& j, TaskSpec& s);

struct ClientInfo {
  std::string client_id;
  std::string app_name;
  std::string workflow_name;
  std::map<std::string, std::string> metadata;
  std::string attestation;  // opaque evidence

  void validate() const;
};

void to_json(json& j, const ClientInfo& c);
void from_json(const json& j, ClientInfo& c);

struct ClientMetrics {
  std::optional<double> loss;
  std::map<std::string, double> eval;
  double duration_ms = 0.0;
  double num_samples = 1.0;
};

void to_json(json& j, const ClientMetrics& m);
void from_json(const json& j, ClientMetrics& m);

}  // namespace florinet

#endif  // FLORINET_TASK_HPP_
