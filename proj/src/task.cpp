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

#include "florinet/task.hpp"

#include <charconv>
#include <cmath>
#include <set>

namespace florinet {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error("invalid_spec", what);
}

std::optional<double> as_number(const std::string& s) {
  double v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) return std::nullopt;
  return v;
}

int compare_values(const std::string& a, const std::string& b) {
  const auto na = as_number(a);
  const auto nb = as_number(b);
  if (na && nb) return *na < *nb ? -1 : (*na > *nb ? 1 : 0);
  return a.compare(b) < 0 ? -1 : (a == b ? 0 : 1);
}

std::string operand_text(const json& j) {
  return j.is_string() ? j.get<std::string>() : j.dump();
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* where) {
  require(j.is_object(), std::string(where) + " must be an object");
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [k, v] : j.items()) {
    require(allowed.count(k) > 0, std::string("unknown field ") + where + "." + k);
  }
}

}  // namespace

std::string to_string(TaskMode m) { return m == TaskMode::kSync ? "sync" : "async"; }

bool Predicate::matches(const std::optional<std::string>& value) const {
  if (op == "exists") return value.has_value() == (operand.is_boolean() ? operand.get<bool>() : true);
  if (!value) return op == "ne";
  if (op == "eq") return *value == operand_text(operand);
  if (op == "ne") return *value != operand_text(operand);
  if (op == "in") {
    if (!operand.is_array()) return false;
    for (const auto& o : operand) {
      if (*value == operand_text(o)) return true;
    }
    return false;
  }
  const int c = compare_values(*value, operand_text(operand));
  if (op == "gt") return c > 0;
  if (op == "gte") return c >= 0;
  if (op == "lt") return c < 0;
  if (op == "lte") return c <= 0;
  return false;
}

void TaskSpec::validate() const {
  require(!task_name.empty(), "task_name must be non-empty");
  require(!app_name.empty(), "app_name must be non-empty");
  require(!workflow_name.empty(), "workflow_name must be non-empty");
  require(clients_per_round >= 1, "clients_per_round must be at least 1");
  require(total_rounds >= 1, "total_rounds must be at least 1");
  require(eval_interval >= 1, "eval_interval must be at least 1");
  require(over_provision >= 1.0 && std::isfinite(over_provision), "over_provision must be >= 1");
  require(timeouts.registration.count() > 0 && timeouts.key_exchange.count() > 0 &&
              timeouts.upload.count() > 0,
          "timeouts must be positive");
  if (mode == TaskMode::kAsync) {
    require(!secagg.enabled, "async excludes pairwise secagg");
    require(async_buffer_size >= 1, "async_buffer_size must be at least 1");
  }
  if (secagg.enabled) {
    require(vg_size >= 2, "vg_size must be at least 2 with secagg");
    require(vg_size <= clients_per_round, "vg_size must not exceed clients_per_round");
    require(vg_size <= 0xFFFFFFFFull, "vg_size too large");
    try {
      quant_params().validate();
    } catch (const Error& e) {
      require(false, std::string("secagg: ") + e.what());
    }
    require(strategy.kind != aggregation::StrategyKind::kWeightedMean,
            "weighted_mean is not available with secagg");
  }
  dp.validate();
  if (dp.mode == privacy::DpMode::kGlobal) {
    require(strategy.kind == aggregation::StrategyKind::kMean, "global dp requires the mean strategy");
  }
  for (const auto& [key, p] : selection_criteria) {
    static const std::set<std::string> ops{"eq", "ne", "in", "gt", "gte", "lt", "lte", "exists"};
    require(ops.count(p.op) > 0, "unknown selection operator " + p.op + " for " + key);
  }
  strategy.validate();
}

QuantParams TaskSpec::quant_params() const {
  return QuantParams{secagg.clip_range, secagg.bits, static_cast<std::uint32_t>(vg_size)};
}

std::uint64_t TaskSpec::registration_target() const {
  if (mode == TaskMode::kAsync) return clients_per_round;
  return static_cast<std::uint64_t>(std::ceil(over_provision * static_cast<double>(clients_per_round) - 1e-9));
}

void to_json(json& j, const TaskSpec& s) {
  json criteria = json::object();
  for (const auto& [k, p] : s.selection_criteria) criteria[k] = json{{p.op, p.operand}};
  j = json{
      {"task_name", s.task_name},
      {"app_name", s.app_name},
      {"workflow_name", s.workflow_name},
      {"clients_per_round", s.clients_per_round},
      {"total_rounds", s.total_rounds},
      {"mode", to_string(s.mode)},
      {"async_buffer_size", s.async_buffer_size},
      {"vg_size", s.vg_size},
      {"secagg", {{"enabled", s.secagg.enabled},
                  {"clip_range", s.secagg.clip_range},
                  {"bits", s.secagg.bits}}},
      {"dp", {{"mode", privacy::to_string(s.dp.mode)},
              {"clip_norm", s.dp.clip_norm},
              {"noise_multiplier", s.dp.noise_multiplier},
              {"delta", s.dp.delta},
              {"population", s.dp.population ? json(*s.dp.population) : json(nullptr)}}},
      {"strategy", {{"kind", aggregation::to_string(s.strategy.kind)},
                    {"command", s.strategy.command},
                    {"timeout_ms", s.strategy.timeout.count()}}},
      {"selection_criteria", criteria},
      {"timeouts", {{"registration_ms", s.timeouts.registration.count()},
                    {"key_exchange_ms", s.timeouts.key_exchange.count()},
                    {"upload_ms", s.timeouts.upload.count()}}},
      {"eval_interval", s.eval_interval},
      {"over_provision", s.over_provision},
      {"retry_limit", s.retry_limit},
      {"seed", s.seed ? json(*s.seed) : json(nullptr)},
      {"attestation", s.attestation},
      {"staleness_discount", s.staleness_discount},
  };
}

void from_json(const json& j, TaskSpec& s) {
  try {
    reject_unknown(j,
                   {"task_name", "app_name", "workflow_name", "clients_per_round", "total_rounds",
                    "mode", "async_buffer_size", "vg_size", "secagg", "dp", "strategy",
                    "selection_criteria", "timeouts", "eval_interval", "over_provision",
                    "retry_limit", "seed", "attestation", "staleness_discount"},
                   "spec");
    s = TaskSpec{};
    read(j, "task_name", s.task_name);
    read(j, "app_name", s.app_name);
    read(j, "workflow_name", s.workflow_name);
    read(j, "clients_per_round", s.clients_per_round);
    read(j, "total_rounds", s.total_rounds);
    std::string mode = "sync";
    read(j, "mode", mode);
    require(mode == "sync" || mode == "async", "mode must be sync or async");
    s.mode = mode == "sync" ? TaskMode::kSync : TaskMode::kAsync;
    read(j, "async_buffer_size", s.async_buffer_size);
    read(j, "vg_size", s.vg_size);
    if (auto it = j.find("secagg"); it != j.end() && !it->is_null()) {
      reject_unknown(*it, {"enabled", "clip_range", "bits"}, "secagg");
      read(*it, "enabled", s.secagg.enabled);
      read(*it, "clip_range", s.secagg.clip_range);
      read(*it, "bits", s.secagg.bits);
    }
    if (auto it = j.find("dp"); it != j.end() && !it->is_null()) {
      reject_unknown(*it, {"mode", "clip_norm", "noise_multiplier", "delta", "population"}, "dp");
      std::string dp_mode = "off";
      read(*it, "mode", dp_mode);
      s.dp.mode = privacy::dp_mode_from(dp_mode);
      read(*it, "clip_norm", s.dp.clip_norm);
      read(*it, "noise_multiplier", s.dp.noise_multiplier);
      read(*it, "delta", s.dp.delta);
      if (auto p = it->find("population"); p != it->end() && !p->is_null()) {
        s.dp.population = p->get<std::uint64_t>();
      }
    }
    if (auto it = j.find("strategy"); it != j.end() && !it->is_null()) {
      reject_unknown(*it, {"kind", "command", "timeout_ms"}, "strategy");
      std::string kind = "mean";
      read(*it, "kind", kind);
      s.strategy.kind = aggregation::strategy_kind_from(kind);
      read(*it, "command", s.strategy.command);
      std::int64_t timeout_ms = s.strategy.timeout.count();
      read(*it, "timeout_ms", timeout_ms);
      s.strategy.timeout = std::chrono::milliseconds(timeout_ms);
    }
    if (auto it = j.find("selection_criteria"); it != j.end() && !it->is_null()) {
      require(it->is_object(), "selection_criteria must be an object");
      for (const auto& [key, value] : it->items()) {
        Predicate p;
        if (value.is_object()) {
          require(value.size() == 1, "selection criterion " + key + " needs exactly one operator");
          p.op = value.begin().key();
          p.operand = value.begin().value();
        } else {
          p.op = "eq";
          p.operand = value;
        }
        s.selection_criteria[key] = p;
      }
    }
    if (auto it = j.find("timeouts"); it != j.end() && !it->is_null()) {
      reject_unknown(*it, {"registration_ms", "key_exchange_ms", "upload_ms"}, "timeouts");
      std::int64_t reg = s.timeouts.registration.count();
      std::int64_t kx = s.timeouts.key_exchange.count();
      std::int64_t up = s.timeouts.upload.count();
      read(*it, "registration_ms", reg);
      read(*it, "key_exchange_ms", kx);
      read(*it, "upload_ms", up);
      s.timeouts = {std::chrono::milliseconds(reg), std::chrono::milliseconds(kx),
                    std::chrono::milliseconds(up)};
    }
    read(j, "eval_interval", s.eval_interval);
    read(j, "over_provision", s.over_provision);
    read(j, "retry_limit", s.retry_limit);
    if (auto it = j.find("seed"); it != j.end() && !it->is_null()) s.seed = it->get<std::uint64_t>();
    read(j, "attestation", s.attestation);
    read(j, "staleness_discount", s.staleness_discount);
  } catch (const json::exception& e) {
    throw Error("invalid_spec", std::string("malformed spec: ") + e.what());
  }
}

void ClientInfo::validate() const {
  if (client_id.empty()) throw Error("invalid_client", "client_id must be non-empty");
  if (app_name.empty() || workflow_name.empty()) {
    throw Error("invalid_client", "app_name and workflow_name must be non-empty");
  }
}

void to_json(json& j, const ClientInfo& c) {
  j = json{{"client_id", c.client_id},
           {"app_name", c.app_name},
           {"workflow_name", c.workflow_name},
           {"metadata", c.metadata},
           {"attestation", c.attestation}};
}

void from_json(const json& j, ClientInfo& c) {
  try {
    c = ClientInfo{};
    read(j, "client_id", c.client_id);
    read(j, "app_name", c.app_name);
    read(j, "workflow_name", c.workflow_name);
    read(j, "metadata", c.metadata);
    read(j, "attestation", c.attestation);
  } catch (const json::exception& e) {
    throw Error("bad_request", std::string("malformed client_info: ") + e.what());
  }
}

void to_json(json& j, const ClientMetrics& m) {
  j = json{{"loss", m.loss ? json(*m.loss) : json(nullptr)},
           {"eval", m.eval},
           {"duration_ms", m.duration_ms},
           {"num_samples", m.num_samples}};
}

void from_json(const json& j, ClientMetrics& m) {
  try {
    m = ClientMetrics{};
    if (auto it = j.find("loss"); it != j.end() && !it->is_null()) m.loss = it->get<double>();
    read(j, "eval", m.eval);
    read(j, "duration_ms", m.duration_ms);
    read(j, "num_samples", m.num_samples);
  } catch (const json::exception& e) {
    throw Error("bad_request", std::string("malformed metrics: ") + e.what());
  }
}

}  // namespace florinet
